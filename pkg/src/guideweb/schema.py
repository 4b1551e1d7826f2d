"""The page annotation record: canonical JSON serialization, validation with
full violation lists, and repair of raw model output."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

GUIDE_CAP = 5

# Canonical action types; anything else is accepted after snake_case
# normalization and reported as other-family by the stats module.
CANONICAL_ACTION_TYPES = (
    "search", "navigate", "login", "contact_support", "signup",
    "subscribe_newsletter", "start_trial", "checkout", "pricing",
    "filter_sort", "download_install", "settings_profile", "other",
)

GUIDE_FIELDS = ("intent", "action_type", "guide_text", "tag", "visible_text", "xpath")
PAGE_FIELDS = ("site", "html_file", "needs_guides", "page_category", "annotations")

_SNAKE_RE = re.compile(r"^[a-z0-9]+(_[a-z0-9]+)*$")


@dataclass(frozen=True)
class GuideAnnotation:
    intent: str
    action_type: str
    guide_text: str
    tag: str
    visible_text: str
    xpath: str

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in GUIDE_FIELDS}


@dataclass(frozen=True)
class PageAnnotation:
    site: str
    needs_guides: bool
    page_category: str
    annotations: tuple[GuideAnnotation, ...] = ()
    html_file: str = "page.html"

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "html_file": self.html_file,
            "needs_guides": self.needs_guides,
            "page_category": self.page_category,
            "annotations": [a.to_dict() for a in self.annotations],
        }


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.rule}] {self.message}"


class AnnotationValidationError(ValueError):
    """Carries the full list of violations found in one document."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def normalize_action_type(value: str) -> str:
    """Lowercase snake_case normalization for open-vocabulary action types."""
    value = value.strip().lower()
    value = re.sub(r"[^a-z0-9]+", "_", value)
    return value.strip("_")


def serialize(page: PageAnnotation) -> str:
    """Canonical JSON: fixed key order, 2-space indent, newline-terminated."""
    return json.dumps(page.to_dict(), indent=2, ensure_ascii=False) + "\n"


def validate_page(page: PageAnnotation) -> list[Violation]:
    """All invariant violations on an in-memory record (empty list = valid)."""
    violations: list[Violation] = []
    if not page.site:
        violations.append(Violation("$.site", "empty-field", "site must be non-empty"))
    if not page.html_file:
        violations.append(Violation("$.html_file", "empty-field", "html_file must be non-empty"))
    if not page.page_category:
        violations.append(Violation("$.page_category", "empty-field", "page_category must be non-empty"))
    if not page.needs_guides and page.annotations:
        violations.append(Violation(
            "$.annotations", "needs-guides-consistency",
            "needs_guides is false but annotations is non-empty",
        ))
    if len(page.annotations) > GUIDE_CAP:
        violations.append(Violation(
            "$.annotations", "guide-cap",
            f"guide cap exceeded: {len(page.annotations)} > {GUIDE_CAP}",
        ))
    seen_xpaths: dict[str, int] = {}
    for i, ann in enumerate(page.annotations):
        base = f"$.annotations[{i}]"
        for name in ("intent", "action_type", "guide_text", "tag", "xpath"):
            if not getattr(ann, name):
                violations.append(Violation(f"{base}.{name}", "empty-field", f"{name} must be non-empty"))
        if ann.action_type and not _SNAKE_RE.match(ann.action_type):
            violations.append(Violation(
                f"{base}.action_type", "action-type-format",
                f"action_type must be lowercase snake_case, got {ann.action_type!r}",
            ))
        if ann.tag and ann.tag != ann.tag.lower():
            violations.append(Violation(f"{base}.tag", "tag-case", "tag must be lowercase"))
        if ann.xpath:
            if ann.xpath in seen_xpaths:
                violations.append(Violation(
                    f"{base}.xpath", "duplicate-xpath",
                    f"xpath already used by annotations[{seen_xpaths[ann.xpath]}]",
                ))
            else:
                seen_xpaths[ann.xpath] = i
    return violations


def _require_str(obj: dict, key: str, path: str, violations: list[Violation],
                 allow_empty: bool = True) -> str:
    if key not in obj:
        violations.append(Violation(f"{path}.{key}", "missing-field", f"{key} is required"))
        return ""
    value = obj[key]
    if not isinstance(value, str):
        violations.append(Violation(f"{path}.{key}", "type", f"{key} must be a string"))
        return ""
    return value


def parse_and_validate(text: str) -> PageAnnotation:
    """Parse a serialized record and enforce every invariant; raises
    AnnotationValidationError carrying the full violation list otherwise."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationValidationError(
            [Violation("$", "syntax", f"invalid JSON: {exc}")]
        ) from exc

    violations: list[Violation] = []
    if not isinstance(data, dict):
        raise AnnotationValidationError([Violation("$", "type", "top level must be an object")])

    for key in data:
        if key not in PAGE_FIELDS:
            violations.append(Violation(f"$.{key}", "unknown-field", f"unexpected field {key!r}"))

    site = _require_str(data, "site", "$", violations)
    html_file = _require_str(data, "html_file", "$", violations)
    page_category = _require_str(data, "page_category", "$", violations)

    needs_guides = False
    if "needs_guides" not in data:
        violations.append(Violation("$.needs_guides", "missing-field", "needs_guides is required"))
    elif not isinstance(data["needs_guides"], bool):
        violations.append(Violation("$.needs_guides", "type", "needs_guides must be a boolean"))
    else:
        needs_guides = data["needs_guides"]

    annotations: list[GuideAnnotation] = []
    if "annotations" not in data:
        violations.append(Violation("$.annotations", "missing-field", "annotations is required"))
    elif not isinstance(data["annotations"], list):
        violations.append(Violation("$.annotations", "type", "annotations must be a list"))
    else:
        for i, raw in enumerate(data["annotations"]):
            base = f"$.annotations[{i}]"
            if not isinstance(raw, dict):
                violations.append(Violation(base, "type", "annotation must be an object"))
                continue
            for key in raw:
                if key not in GUIDE_FIELDS:
                    violations.append(Violation(f"{base}.{key}", "unknown-field", f"unexpected field {key!r}"))
            annotations.append(GuideAnnotation(
                intent=_require_str(raw, "intent", base, violations),
                action_type=_require_str(raw, "action_type", base, violations),
                guide_text=_require_str(raw, "guide_text", base, violations),
                tag=_require_str(raw, "tag", base, violations),
                visible_text=_require_str(raw, "visible_text", base, violations),
                xpath=_require_str(raw, "xpath", base, violations),
            ))

    page = PageAnnotation(
        site=site,
        needs_guides=needs_guides,
        page_category=page_category,
        annotations=tuple(annotations),
        html_file=html_file or "page.html",
    )
    violations.extend(validate_page(page))
    if violations:
        raise AnnotationValidationError(violations)
    return page


# ---------------------------------------------------------------------------
# Raw model output repair
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*")


def repair_raw_output(raw: str, end_marker: str = "</JSON>") -> str | None:
    """Best-effort extraction of a JSON candidate from a model completion:
    truncate at the end marker, strip code fences, take the first brace to its
    matching close. None means unrecoverable (caller must re-prompt)."""
    marker_at = raw.find(end_marker)
    if marker_at >= 0:
        raw = raw[:marker_at]
    raw = _FENCE_RE.sub("", raw)

    start = raw.find("{")
    if start < 0:
        return None
    end = _matching_brace(raw, start)
    if end is not None:
        return raw[start:end + 1]
    last = raw.rfind("}")
    if last <= start:
        return None
    return raw[start:last + 1]


def _matching_brace(text: str, start: int) -> int | None:
    """Index of the brace closing text[start], skipping JSON string literals."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None
