/**
 * Annotation record types and client-side validation.
 *
 * The rules mirror the review service exactly (guide cap 5, needs_guides=false
 * implies no annotations, unique xpaths, non-empty required fields, lowercase
 * snake_case action types, lowercase tags) so the UI never submits a payload
 * the service would reject. Parity is pinned by tests/fixtures/schema_conformance.json.
 */

export const GUIDE_CAP = 5;

export const CANONICAL_ACTION_TYPES = [
  "search", "navigate", "login", "contact_support", "signup",
  "subscribe_newsletter", "start_trial", "checkout", "pricing",
  "filter_sort", "download_install", "settings_profile", "other",
] as const;

export interface GuideAnnotation {
  intent: string;
  action_type: string;
  guide_text: string;
  tag: string;
  visible_text: string;
  xpath: string;
}

export interface PageAnnotation {
  site: string;
  html_file: string;
  needs_guides: boolean;
  page_category: string;
  annotations: GuideAnnotation[];
}

export interface Violation {
  path: string;
  rule: string;
  message: string;
}

const SNAKE_RE = /^[a-z0-9]+(_[a-z0-9]+)*$/;

export function normalizeActionType(value: string): string {
  return value
    .trim()
    .toLowerCase()
    .replace(/[^a-z0-9]+/g, "_")
    .replace(/^_+|_+$/g, "");
}

export function validatePage(page: PageAnnotation): Violation[] {
  const violations: Violation[] = [];
  const push = (path: string, rule: string, message: string) =>
    violations.push({ path, rule, message });

  if (!page.site) push("$.site", "empty-field", "site must be non-empty");
  if (!page.html_file) push("$.html_file", "empty-field", "html_file must be non-empty");
  if (!page.page_category)
    push("$.page_category", "empty-field", "page_category must be non-empty");
  if (!page.needs_guides && page.annotations.length > 0)
    push("$.annotations", "needs-guides-consistency",
      "needs_guides is false but annotations is non-empty");
  if (page.annotations.length > GUIDE_CAP)
    push("$.annotations", "guide-cap",
      `guide cap exceeded: ${page.annotations.length} > ${GUIDE_CAP}`);

  const seen = new Map<string, number>();
  page.annotations.forEach((ann, i) => {
    const base = `$.annotations[${i}]`;
    for (const field of ["intent", "action_type", "guide_text", "tag", "xpath"] as const) {
      if (!ann[field]) push(`${base}.${field}`, "empty-field", `${field} must be non-empty`);
    }
    if (ann.action_type && !SNAKE_RE.test(ann.action_type))
      push(`${base}.action_type`, "action-type-format",
        `action_type must be lowercase snake_case, got ${JSON.stringify(ann.action_type)}`);
    if (ann.tag && ann.tag !== ann.tag.toLowerCase())
      push(`${base}.tag`, "tag-case", "tag must be lowercase");
    if (ann.xpath) {
      const first = seen.get(ann.xpath);
      if (first !== undefined) {
        push(`${base}.xpath`, "duplicate-xpath",
          `xpath already used by annotations[${first}]`);
      } else {
        seen.set(ann.xpath, i);
      }
    }
  });
  return violations;
}
