import { ReviewApi } from "./api.js";
import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "";
const mount = document.getElementById("app");
if (!mount) throw new Error("missing #app mount point");

void new App(new ReviewApi(apiBase), mount).start();
