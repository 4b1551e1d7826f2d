/**
 * Guide overlays: resolve each annotation's xpath in the rendered snapshot,
 * draw a highlight box plus tooltip per grounded target, and surface the
 * unresolvable ones in a dangling list (never silently hidden).
 */

import type { GuideAnnotation } from "./schema.js";
import { MalformedXPathError, resolveXPath } from "./xpath.js";

export interface BoundingBox {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface OverlayAnnotation {
  index: number;
  annotation: GuideAnnotation;
  element: Element | null;
  box: BoundingBox | null;
  highlighted: boolean;
  dirty: boolean;
}

export interface ResolvedOverlays {
  grounded: OverlayAnnotation[];
  dangling: OverlayAnnotation[];
}

export function resolveOverlays(doc: Document, annotations: GuideAnnotation[]): ResolvedOverlays {
  const grounded: OverlayAnnotation[] = [];
  const dangling: OverlayAnnotation[] = [];
  annotations.forEach((annotation, index) => {
    let element: Element | null = null;
    try {
      element = resolveXPath(doc, annotation.xpath);
    } catch (error) {
      if (!(error instanceof MalformedXPathError)) throw error;
    }
    const overlay: OverlayAnnotation = {
      index,
      annotation,
      element,
      box: element ? boxOf(element) : null,
      highlighted: false,
      dirty: false,
    };
    (element ? grounded : dangling).push(overlay);
  });
  return { grounded, dangling };
}

export function boxOf(element: Element): BoundingBox {
  const rect = element.getBoundingClientRect();
  const doc = element.ownerDocument;
  const scrollX = doc?.defaultView?.scrollX ?? 0;
  const scrollY = doc?.defaultView?.scrollY ?? 0;
  return {
    left: rect.left + scrollX,
    top: rect.top + scrollY,
    width: rect.width,
    height: rect.height,
  };
}

export interface DrawOptions {
  onSelect?: (overlay: OverlayAnnotation) => void;
}

/** Draw highlight + tooltip nodes into the layer; returns the created nodes. */
export function drawOverlays(
  layer: HTMLElement,
  overlays: OverlayAnnotation[],
  options: DrawOptions = {},
): HTMLElement[] {
  layer.textContent = "";
  const doc = layer.ownerDocument;
  return overlays.map((overlay) => {
    const box = overlay.box ?? { left: 0, top: 0, width: 0, height: 0 };
    const highlight = doc.createElement("div");
    highlight.className = "gw-highlight" + (overlay.highlighted ? " gw-selected" : "");
    highlight.dataset.annotationIndex = String(overlay.index);
    highlight.style.position = "absolute";
    highlight.style.left = `${box.left}px`;
    highlight.style.top = `${box.top}px`;
    highlight.style.width = `${box.width}px`;
    highlight.style.height = `${box.height}px`;

    const tooltip = doc.createElement("div");
    tooltip.className = "gw-tooltip";
    const intent = doc.createElement("strong");
    intent.textContent = overlay.annotation.intent;
    const action = doc.createElement("em");
    action.textContent = overlay.annotation.action_type;
    const guide = doc.createElement("span");
    guide.textContent = overlay.annotation.guide_text;
    tooltip.append(intent, action, guide);
    highlight.appendChild(tooltip);

    highlight.addEventListener("click", (event) => {
      event.stopPropagation();
      options.onSelect?.(overlay);
    });
    layer.appendChild(highlight);
    return highlight;
  });
}
