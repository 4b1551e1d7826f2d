import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { generateXPath, MalformedXPathError, normalizeXPath, resolveXPath } from "../src/xpath.js";

interface ConformanceElement {
  xpath: string;
  tag: string;
  visible_text: string;
}

interface ConformancePage {
  name: string;
  html: string;
  elements: ConformanceElement[];
}

const conformance: { pages: ConformancePage[] } = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "xpath_conformance.json"), "utf-8"),
);

function parse(html: string): Document {
  return new DOMParser().parseFromString(html, "text/html");
}

describe("xpath conformance with the backend fixture set", () => {
  for (const page of conformance.pages) {
    it(`resolves and regenerates every indexed element on ${page.name}`, () => {
      const doc = parse(page.html);
      for (const element of page.elements) {
        const node = resolveXPath(doc, element.xpath);
        expect(node, element.xpath).not.toBeNull();
        expect(node!.tagName.toLowerCase()).toBe(element.tag);
        expect(generateXPath(node!, "stable_then_abs")).toBe(element.xpath);
      }
    });

    it(`round-trips the positional branch for every element on ${page.name}`, () => {
      const doc = parse(page.html);
      const all = Array.from(doc.getElementsByTagName("*"));
      for (const el of all) {
        const xpath = generateXPath(el, "absolute");
        expect(xpath.startsWith("/html[1]")).toBe(true);
        expect(resolveXPath(doc, xpath)).toBe(el);
      }
    });
  }
});

describe("generateXPath", () => {
  it("uses the stable id form for unique quote-free ids", () => {
    const doc = parse('<body><input id="q"></body>');
    const input = doc.querySelector("input")!;
    expect(generateXPath(input)).toBe("//*[@id='q']");
  });

  it("falls back to positional when the id repeats", () => {
    const doc = parse('<body><div id="dup">a</div><div id="dup">b</div></body>');
    const divs = Array.from(doc.querySelectorAll("div"));
    expect(generateXPath(divs[0])).toBe("/html[1]/body[1]/div[1]");
    expect(generateXPath(divs[1])).toBe("/html[1]/body[1]/div[2]");
  });

  it("falls back to positional when the id carries a quote", () => {
    const doc = parse(`<body><a id="o'brien" href="/about">About</a></body>`);
    expect(generateXPath(doc.querySelector("a")!)).toBe("/html[1]/body[1]/a[1]");
  });

  it("indexes siblings per tag", () => {
    const doc = parse("<body><ul><li>a</li><li>b</li></ul></body>");
    const second = doc.querySelectorAll("li")[1];
    expect(generateXPath(second)).toBe("/html[1]/body[1]/ul[1]/li[2]");
  });
});

describe("resolveXPath", () => {
  it("returns null for a missing id", () => {
    expect(resolveXPath(parse("<body></body>"), "//*[@id='missing']")).toBeNull();
  });

  it("returns null for an out-of-range index", () => {
    const doc = parse("<body><div>a</div></body>");
    expect(resolveXPath(doc, "/html[1]/body[1]/div[3]")).toBeNull();
  });

  it("accepts the double-quoted id form", () => {
    const doc = parse('<body><input id="q"></body>');
    expect(resolveXPath(doc, '//*[@id="q"]')).not.toBeNull();
  });

  it("rejects locators outside the grammar", () => {
    const doc = parse("<body></body>");
    for (const bad of ["//a[1]", "html/body", "/html[1]/body[x]", ""]) {
      expect(() => resolveXPath(doc, bad)).toThrow(MalformedXPathError);
    }
  });
});

describe("normalizeXPath", () => {
  it("collapses double quotes to single and trims", () => {
    expect(normalizeXPath('  //*[@id="q"] ')).toBe("//*[@id='q']");
    expect(normalizeXPath(" /html[1]/body[1] ")).toBe("/html[1]/body[1]");
  });
});
