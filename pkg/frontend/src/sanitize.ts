/**
 * Snapshot sanitation: the review must reflect the stored bytes, not a live
 * site, so scripts are stripped and a CSP meta tag blocks all network loads
 * before the document enters the (already script-less) sandboxed frame.
 */

const CSP_CONTENT = "default-src 'none'; style-src 'unsafe-inline'; img-src data:";

export function sanitizeSnapshot(html: string): string {
  const doc = new DOMParser().parseFromString(html, "text/html");
  doc.querySelectorAll("script").forEach((node) => node.remove());
  const all = doc.getElementsByTagName("*");
  for (let i = 0; i < all.length; i++) {
    const el = all[i];
    for (const attr of Array.from(el.attributes)) {
      if (attr.name.toLowerCase().startsWith("on")) el.removeAttribute(attr.name);
    }
  }
  const meta = doc.createElement("meta");
  meta.setAttribute("http-equiv", "Content-Security-Policy");
  meta.setAttribute("content", CSP_CONTENT);
  const head = doc.head ?? doc.createElement("head");
  head.insertBefore(meta, head.firstChild);
  return "<!DOCTYPE html>\n" + (doc.documentElement?.outerHTML ?? "");
}
