/** Typed client for the review service HTTP API. */

import type { PageAnnotation, Violation } from "./schema.js";

export interface PageSummary {
  site: string;
  needs_guides: boolean;
  guide_count: number;
  status: "unreviewed" | "verified" | "removed";
  revision: number;
}

export interface PageDetail {
  site: string;
  annotation: PageAnnotation;
  status: string;
  note: string;
  revision: number;
}

export class ApiError extends Error {
  constructor(message: string, public status: number) {
    super(message);
  }
}

export class NotFoundError extends ApiError {}

export class ConflictError extends ApiError {
  constructor(public expected: number, public actual: number) {
    super(`stale write: expected revision ${expected}, actual ${actual}`, 409);
  }
}

export class ValidationRejected extends ApiError {
  constructor(public violations: Violation[]) {
    super(violations.map((v) => `${v.path}: ${v.message}`).join("; "), 422);
  }
}

async function fail(response: Response): Promise<never> {
  let detail: unknown = undefined;
  try {
    detail = (await response.json()).detail;
  } catch {
    /* non-JSON body */
  }
  if (response.status === 404) {
    throw new NotFoundError(String(detail ?? "not found"), 404);
  }
  if (response.status === 409 && detail && typeof detail === "object") {
    const d = detail as { expected: number; actual: number };
    throw new ConflictError(d.expected, d.actual);
  }
  if (response.status === 422) {
    const d = detail as { violations?: Violation[] } | string | undefined;
    if (d && typeof d === "object" && Array.isArray(d.violations)) {
      throw new ValidationRejected(d.violations);
    }
    throw new ValidationRejected([{ path: "$", rule: "invalid", message: String(detail) }]);
  }
  throw new ApiError(`request failed (${response.status})`, response.status);
}

export class ReviewApi {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listPages(): Promise<PageSummary[]> {
    const response = await fetch(this.url("/pages"));
    if (!response.ok) await fail(response);
    return (await response.json()).pages as PageSummary[];
  }

  async getPage(site: string): Promise<PageDetail> {
    const response = await fetch(this.url(`/pages/${encodeURIComponent(site)}`));
    if (!response.ok) await fail(response);
    return (await response.json()) as PageDetail;
  }

  async getPageHtml(site: string): Promise<string> {
    const response = await fetch(this.url(`/pages/${encodeURIComponent(site)}/html`));
    if (!response.ok) await fail(response);
    return await response.text();
  }

  async putAnnotations(
    site: string,
    annotation: PageAnnotation,
    expectedRevision: number,
  ): Promise<number> {
    const response = await fetch(this.url(`/pages/${encodeURIComponent(site)}/annotations`), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ expected_revision: expectedRevision, annotation }),
    });
    if (!response.ok) await fail(response);
    return (await response.json()).revision as number;
  }

  async setStatus(site: string, status: string, note = ""): Promise<PageSummary> {
    const response = await fetch(this.url(`/pages/${encodeURIComponent(site)}/status`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ status, note }),
    });
    if (!response.ok) await fail(response);
    return (await response.json()) as PageSummary;
  }
}
