/**
 * Client-side locator generation/resolution, duplicating the backend's rules:
 * a document-unique, quote-free id yields //*[@id='...'], anything else the
 * absolute /html[1]/.../tag[k] path with 1-based per-tag sibling indices.
 * Parity is pinned by tests/fixtures/xpath_conformance.json.
 */

export type XPathMode = "stable_then_abs" | "absolute";

const ID_FORM_RE = /^\/\/\*\[@id=(['"])([\s\S]*)\1\]$/;
const STEP_RE = /^([a-zA-Z][a-zA-Z0-9-]*)(?:\[(\d+)\])?$/;

export class MalformedXPathError extends Error {}

function elementChildren(node: Element): Element[] {
  return Array.from(node.children);
}

function idIsUnique(doc: Document, id: string): boolean {
  let count = 0;
  const all = doc.getElementsByTagName("*");
  for (let i = 0; i < all.length; i++) {
    if (all[i].getAttribute("id") === id && ++count > 1) return false;
  }
  return count === 1;
}

export function generateXPath(el: Element, mode: XPathMode = "stable_then_abs"): string {
  if (mode === "stable_then_abs") {
    const id = el.getAttribute("id");
    if (id && !id.includes("'") && !id.includes('"') && el.ownerDocument
        && idIsUnique(el.ownerDocument, id)) {
      return `//*[@id='${id}']`;
    }
  }
  const steps: string[] = [];
  let current: Element | null = el;
  while (current) {
    const tag = current.tagName.toLowerCase();
    let position = 1;
    let sibling = current.previousElementSibling;
    while (sibling) {
      if (sibling.tagName.toLowerCase() === tag) position++;
      sibling = sibling.previousElementSibling;
    }
    steps.push(`${tag}[${position}]`);
    current = current.parentElement;
  }
  return "/" + steps.reverse().join("/");
}

export function normalizeXPath(xpath: string): string {
  const trimmed = xpath.trim();
  const match = ID_FORM_RE.exec(trimmed);
  if (match && match[1] === '"') return `//*[@id='${match[2]}']`;
  return trimmed;
}

export function resolveXPath(doc: Document, xpath: string): Element | null {
  const trimmed = xpath.trim();
  const idMatch = ID_FORM_RE.exec(trimmed);
  if (idMatch) {
    const all = doc.getElementsByTagName("*");
    for (let i = 0; i < all.length; i++) {
      if (all[i].getAttribute("id") === idMatch[2]) return all[i];
    }
    return null;
  }
  if (!trimmed.startsWith("/") || trimmed.startsWith("//")) {
    throw new MalformedXPathError(`unsupported locator: ${trimmed}`);
  }
  let children: Element[] = doc.documentElement ? [doc.documentElement] : [];
  let current: Element | null = null;
  for (const rawStep of trimmed.slice(1).split("/")) {
    const step = STEP_RE.exec(rawStep);
    if (!step) throw new MalformedXPathError(`unsupported locator step: ${rawStep}`);
    const tag = step[1].toLowerCase();
    const index = step[2] ? parseInt(step[2], 10) : 1;
    const matches = children.filter((c) => c.tagName.toLowerCase() === tag);
    if (index < 1 || index > matches.length) return null;
    current = matches[index - 1];
    children = elementChildren(current);
  }
  return current;
}
