/**
 * Reviewer app: a worklist of sites (unreviewed first), the stored snapshot in
 * a sandboxed iframe with guide overlays, and an editor that round-trips
 * changes through the review service with optimistic concurrency.
 */

import { ConflictError, NotFoundError, ReviewApi, ValidationRejected } from "./api.js";
import type { PageDetail, PageSummary } from "./api.js";
import { drawOverlays, resolveOverlays } from "./overlay.js";
import type { OverlayAnnotation, ResolvedOverlays } from "./overlay.js";
import { sanitizeSnapshot } from "./sanitize.js";
import { normalizeActionType, validatePage } from "./schema.js";
import type { PageAnnotation, Violation } from "./schema.js";
import { generateXPath, resolveXPath } from "./xpath.js";

const STATUS_ORDER: Record<string, number> = { unreviewed: 0, verified: 1, removed: 2 };

export class App {
  private summaries: PageSummary[] = [];
  private current: PageDetail | null = null;
  private working: PageAnnotation | null = null;
  private overlays: ResolvedOverlays = { grounded: [], dangling: [] };
  private frameDoc: Document | null = null;
  private pickingIndex: number | null = null;
  private selectedIndex: number | null = null;

  // skeleton nodes
  private queueList!: HTMLUListElement;
  private banner!: HTMLElement;
  private frameWrap!: HTMLElement;
  private frame!: HTMLIFrameElement;
  private overlayLayer!: HTMLElement;
  private editor!: HTMLElement;
  private emptyState!: HTMLElement;

  constructor(private api: ReviewApi, private root: HTMLElement) {}

  async start(): Promise<void> {
    this.buildSkeleton();
    this.root.ownerDocument.addEventListener("keydown", (event) => this.onKey(event));
    await this.refreshQueue();
    const first = this.queueOrder()[0];
    if (first) await this.loadSite(first.site);
  }

  // -- worklist -------------------------------------------------------------

  queueOrder(): PageSummary[] {
    return [...this.summaries].sort((a, b) => {
      const byStatus = (STATUS_ORDER[a.status] ?? 3) - (STATUS_ORDER[b.status] ?? 3);
      return byStatus !== 0 ? byStatus : a.site.localeCompare(b.site);
    });
  }

  async refreshQueue(): Promise<void> {
    this.summaries = await this.api.listPages();
    this.renderQueue();
  }

  private renderQueue(): void {
    this.queueList.textContent = "";
    const doc = this.root.ownerDocument;
    for (const summary of this.queueOrder()) {
      const item = doc.createElement("li");
      item.dataset.site = summary.site;
      item.dataset.testid = "queue-item";
      if (summary.site === this.current?.site) item.classList.add("gw-active");
      const name = doc.createElement("span");
      name.textContent = summary.site;
      const badge = doc.createElement("span");
      badge.className = `gw-badge gw-badge-${summary.status}`;
      badge.dataset.testid = "status-badge";
      badge.textContent = summary.status;
      const count = doc.createElement("span");
      count.className = "gw-count";
      count.textContent = summary.needs_guides ? `${summary.guide_count} guides` : "no guides";
      item.append(name, count, badge);
      item.addEventListener("click", () => void this.loadSite(summary.site));
      this.queueList.appendChild(item);
    }
  }

  private onKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && ("value" in target || target.isContentEditable)) return;
    if (event.key === "n" || event.key === "ArrowDown") void this.step(1);
    else if (event.key === "p" || event.key === "ArrowUp") void this.step(-1);
  }

  private async step(delta: number): Promise<void> {
    const order = this.queueOrder();
    if (order.length === 0) return;
    const at = order.findIndex((s) => s.site === this.current?.site);
    const next = order[(at + delta + order.length) % order.length];
    await this.loadSite(next.site);
  }

  // -- page loading ---------------------------------------------------------

  async loadSite(site: string): Promise<void> {
    this.clearBanner();
    this.pickingIndex = null;
    this.selectedIndex = null;
    try {
      this.current = await this.api.getPage(site);
      const html = await this.api.getPageHtml(site);
      this.working = structuredClone(this.current.annotation);
      this.renderFrame(html);
      this.refreshOverlays();
      this.renderQueue();
      this.renderEditor();
    } catch (error) {
      this.current = null;
      this.working = null;
      this.showBanner(
        error instanceof NotFoundError
          ? `Site ${site} is not in the corpus.`
          : `Failed to load ${site}: ${(error as Error).message}`,
        "error",
      );
    }
  }

  private renderFrame(html: string): void {
    const doc = this.frame.contentDocument;
    if (!doc) {
      this.frameDoc = null;
      this.showBanner("Snapshot frame unavailable in this browser.", "error");
      return;
    }
    doc.open();
    doc.write(sanitizeSnapshot(html));
    doc.close();
    this.frameDoc = doc;
    doc.addEventListener(
      "click",
      (event) => {
        event.preventDefault();
        event.stopPropagation();
        // instanceof Element fails across the iframe realm; duck-type instead
        const target = event.target as Element | null;
        if (this.pickingIndex !== null && target && target.nodeType === 1) {
          this.finishPick(target);
        }
      },
      true,
    );
  }

  refreshOverlays(): void {
    if (!this.frameDoc || !this.working) {
      this.overlays = { grounded: [], dangling: [] };
      return;
    }
    this.overlays = resolveOverlays(this.frameDoc, this.working.annotations);
    for (const overlay of this.overlays.grounded) {
      overlay.highlighted = overlay.index === this.selectedIndex;
    }
    drawOverlays(this.overlayLayer, this.overlays.grounded, {
      onSelect: (overlay) => {
        this.selectedIndex = overlay.index;
        this.refreshOverlays();
        this.renderEditor();
      },
    });
  }

  // -- editor ---------------------------------------------------------------

  private renderEditor(): void {
    const doc = this.root.ownerDocument;
    this.editor.textContent = "";
    if (!this.current || !this.working) {
      this.emptyState.hidden = false;
      return;
    }
    this.emptyState.hidden = this.working.annotations.length > 0;
    if (!this.emptyState.hidden) {
      this.emptyState.textContent = "No guide annotations on this page.";
    }

    const heading = doc.createElement("h2");
    heading.textContent = `${this.current.site} (revision ${this.current.revision}, ${this.current.status})`;
    heading.dataset.testid = "page-heading";
    this.editor.appendChild(heading);

    if (this.overlays.dangling.length > 0) {
      const danglingBox = doc.createElement("section");
      danglingBox.className = "gw-dangling";
      danglingBox.dataset.testid = "dangling-list";
      const title = doc.createElement("h3");
      title.textContent = "Dangling targets (xpath does not resolve)";
      danglingBox.appendChild(title);
      const list = doc.createElement("ul");
      for (const overlay of this.overlays.dangling) {
        const item = doc.createElement("li");
        item.dataset.testid = "dangling-item";
        item.textContent = `#${overlay.index} ${overlay.annotation.intent} — ${overlay.annotation.xpath}`;
        list.appendChild(item);
      }
      danglingBox.appendChild(list);
      this.editor.appendChild(danglingBox);
    }

    this.working.annotations.forEach((annotation, index) => {
      this.editor.appendChild(this.annotationForm(index));
    });

    const controls = doc.createElement("div");
    controls.className = "gw-controls";

    const save = doc.createElement("button");
    save.textContent = "Save annotations";
    save.dataset.testid = "save-button";
    save.addEventListener("click", () => void this.save());

    const verify = doc.createElement("button");
    verify.textContent = "Mark verified";
    verify.dataset.testid = "verify-button";
    verify.addEventListener("click", () => void this.setStatus("verified"));

    const remove = doc.createElement("button");
    remove.textContent = "Remove page";
    remove.dataset.testid = "remove-button";
    remove.addEventListener("click", () => void this.setStatus("removed"));

    const note = doc.createElement("input");
    note.type = "text";
    note.placeholder = "Reviewer note";
    note.dataset.testid = "note-input";
    note.value = this.current.note;

    controls.append(save, verify, remove, note);
    this.editor.appendChild(controls);

    const problems = doc.createElement("ul");
    problems.className = "gw-violations";
    problems.dataset.testid = "violations";
    this.editor.appendChild(problems);
  }

  private annotationForm(index: number): HTMLElement {
    const doc = this.root.ownerDocument;
    const annotation = this.working!.annotations[index];
    const form = doc.createElement("fieldset");
    form.className = "gw-annotation" + (index === this.selectedIndex ? " gw-selected" : "");
    form.dataset.testid = "annotation-form";
    form.dataset.annotationIndex = String(index);

    const legend = doc.createElement("legend");
    legend.textContent = `#${index} ${annotation.tag} — ${annotation.visible_text || "(no text)"}`;
    form.appendChild(legend);

    const field = (
      name: "intent" | "action_type" | "guide_text",
      control: "input" | "textarea",
    ) => {
      const label = doc.createElement("label");
      label.textContent = name;
      const widget = doc.createElement(control) as HTMLInputElement | HTMLTextAreaElement;
      widget.value = annotation[name];
      widget.dataset.testid = `${name}-field`;
      widget.addEventListener("input", () => {
        const value = name === "action_type" ? normalizeActionType(widget.value) : widget.value;
        this.working!.annotations[index] = { ...this.working!.annotations[index], [name]: value };
        this.markDirty(index);
      });
      label.appendChild(widget);
      form.appendChild(label);
    };
    field("intent", "input");
    field("action_type", "input");
    field("guide_text", "textarea");

    const xpath = doc.createElement("code");
    xpath.dataset.testid = "xpath-label";
    xpath.textContent = annotation.xpath;
    form.appendChild(xpath);

    const pick = doc.createElement("button");
    pick.textContent = this.pickingIndex === index ? "Click the new target…" : "Re-pick target";
    pick.dataset.testid = "pick-button";
    pick.addEventListener("click", () => {
      this.pickingIndex = this.pickingIndex === index ? null : index;
      this.renderEditor();
    });
    form.appendChild(pick);
    return form;
  }

  private markDirty(index: number): void {
    const overlay = [...this.overlays.grounded, ...this.overlays.dangling]
      .find((o) => o.index === index);
    if (overlay) overlay.dirty = true;
  }

  private finishPick(target: Element): void {
    if (this.pickingIndex === null || !this.working || !this.frameDoc) return;
    const index = this.pickingIndex;
    const xpath = generateXPath(target, "stable_then_abs");
    this.working.annotations[index] = {
      ...this.working.annotations[index],
      xpath,
      tag: target.tagName.toLowerCase(),
      visible_text: (target.textContent ?? "").replace(/\s+/g, " ").trim(),
    };
    this.pickingIndex = null;
    this.selectedIndex = index;
    this.markDirty(index);
    this.refreshOverlays();
    this.renderEditor();
  }

  // -- persistence ----------------------------------------------------------

  private clientViolations(): Violation[] {
    if (!this.working || !this.frameDoc) return [];
    const violations = validatePage(this.working);
    this.working.annotations.forEach((annotation, i) => {
      let resolved: Element | null = null;
      try {
        resolved = resolveXPath(this.frameDoc!, annotation.xpath);
      } catch {
        resolved = null;
      }
      if (!resolved) {
        violations.push({
          path: `$.annotations[${i}].xpath`,
          rule: "xpath-unresolvable",
          message: `${annotation.xpath} does not resolve in the snapshot`,
        });
      }
    });
    return violations;
  }

  async save(): Promise<void> {
    if (!this.current || !this.working) return;
    this.clearBanner();
    const violations = this.clientViolations();
    if (violations.length > 0) {
      this.showViolations(violations);  // never send what the service rejects
      return;
    }
    try {
      const revision = await this.api.putAnnotations(
        this.current.site, this.working, this.current.revision);
      this.current = { ...this.current, annotation: structuredClone(this.working), revision };
      await this.refreshQueue();
      this.renderEditor();
      this.showBanner(`Saved; revision is now ${revision}.`, "ok");
    } catch (error) {
      if (error instanceof ConflictError) {
        this.showConflict(error);
      } else if (error instanceof ValidationRejected) {
        this.showViolations(error.violations);
      } else {
        this.showBanner(`Save failed: ${(error as Error).message}`, "error");
      }
    }
  }

  async setStatus(status: "verified" | "removed"): Promise<void> {
    if (!this.current) return;
    const note = this.editor.querySelector<HTMLInputElement>('[data-testid="note-input"]');
    const result = await this.api.setStatus(this.current.site, status, note?.value ?? "");
    this.current = { ...this.current, status: result.status, revision: result.revision };
    await this.refreshQueue();
    this.renderEditor();
  }

  // -- banners --------------------------------------------------------------

  private showViolations(violations: Violation[]): void {
    const list = this.editor.querySelector<HTMLUListElement>('[data-testid="violations"]');
    if (!list) return;
    list.textContent = "";
    for (const violation of violations) {
      const item = this.root.ownerDocument.createElement("li");
      item.textContent = `${violation.path}: [${violation.rule}] ${violation.message}`;
      list.appendChild(item);
    }
  }

  private showConflict(error: ConflictError): void {
    this.showBanner(
      `Stale write: the page changed (expected revision ${error.expected}, ` +
      `actual ${error.actual}). Reload to pick up the latest annotations.`,
      "conflict",
    );
    const reload = this.root.ownerDocument.createElement("button");
    reload.textContent = "Reload page";
    reload.dataset.testid = "conflict-reload";
    reload.addEventListener("click", () => {
      if (this.current) void this.loadSite(this.current.site);
    });
    this.banner.appendChild(reload);
  }

  private showBanner(message: string, kind: "ok" | "error" | "conflict"): void {
    this.banner.hidden = false;
    this.banner.className = `gw-banner gw-banner-${kind}`;
    this.banner.dataset.kind = kind;
    this.banner.textContent = message;
  }

  private clearBanner(): void {
    this.banner.hidden = true;
    this.banner.textContent = "";
    this.banner.dataset.kind = "";
  }

  // -- skeleton -------------------------------------------------------------

  private buildSkeleton(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    this.root.classList.add("gw-root");

    const queue = doc.createElement("aside");
    queue.className = "gw-queue";
    const queueTitle = doc.createElement("h2");
    queueTitle.textContent = "Review queue";
    this.queueList = doc.createElement("ul");
    this.queueList.dataset.testid = "queue";
    queue.append(queueTitle, this.queueList);

    const main = doc.createElement("main");
    main.className = "gw-main";

    this.banner = doc.createElement("div");
    this.banner.className = "gw-banner";
    this.banner.dataset.testid = "banner";
    this.banner.hidden = true;

    this.frameWrap = doc.createElement("div");
    this.frameWrap.className = "gw-frame-wrap";
    this.frame = doc.createElement("iframe");
    this.frame.className = "gw-frame";
    // allow-same-origin only: scripts stay disabled inside the sandbox
    this.frame.setAttribute("sandbox", "allow-same-origin");
    this.frame.dataset.testid = "snapshot-frame";
    this.overlayLayer = doc.createElement("div");
    this.overlayLayer.className = "gw-overlay-layer";
    this.overlayLayer.dataset.testid = "overlay-layer";
    this.frameWrap.append(this.frame, this.overlayLayer);

    this.editor = doc.createElement("section");
    this.editor.className = "gw-editor";
    this.editor.dataset.testid = "editor";

    this.emptyState = doc.createElement("p");
    this.emptyState.className = "gw-empty";
    this.emptyState.dataset.testid = "empty-state";
    this.emptyState.hidden = true;

    main.append(this.banner, this.frameWrap, this.emptyState, this.editor);
    this.root.append(queue, main);
  }

  // test hooks
  get overlayState(): ResolvedOverlays {
    return this.overlays;
  }

  get currentDetail(): PageDetail | null {
    return this.current;
  }

  get workingCopy(): PageAnnotation | null {
    return this.working;
  }

  highlightElements(): HTMLElement[] {
    return Array.from(this.overlayLayer.querySelectorAll<HTMLElement>(".gw-highlight"));
  }
}

export type { OverlayAnnotation };
