"""Budgeted page compression: headings, text blocks, a global excerpt, and
interactive entries, rendered into a deterministic prompt.

Selection is prefix-based in document order; no salience ranking. The
interactive character budget drops whole trailing entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .dom import DomTree, ElementIndex, generate_xpath, page_text, resolve_xpath
from .dom import extract_headings, extract_text_blocks

_ID_FORM_PREFIX = "//*[@id='"


@dataclass(frozen=True)
class ShorterConfig:
    max_text_blocks: int = 800
    max_block_chars: int = 400
    excerpt_ratio: float = 0.02
    excerpt_min_chars: int = 100
    excerpt_max_chars: int = 200
    headings_enabled: bool = True
    max_headings: int = 20
    max_heading_chars: int = 40
    max_interactive: int = 2000
    max_element_text_chars: int = 120
    interactive_text_budget_chars: int = 6500
    xpath_mode: str = "stable_then_abs"
    xpath_text_field_max: int = 80
    xpath_attr_field_max: int = 200
    end_marker: str = "</JSON>"
    chars_per_token: int = 4

    def __post_init__(self) -> None:
        counts = (
            self.max_text_blocks, self.max_block_chars, self.excerpt_min_chars,
            self.excerpt_max_chars, self.max_headings, self.max_heading_chars,
            self.max_interactive, self.max_element_text_chars,
            self.interactive_text_budget_chars, self.xpath_text_field_max,
            self.xpath_attr_field_max, self.chars_per_token,
        )
        if any(c <= 0 for c in counts):
            raise ValueError("all ShorterConfig counts must be > 0")
        if not 0 < self.excerpt_ratio < 1:
            raise ValueError("excerpt_ratio must be in (0, 1)")
        if self.excerpt_min_chars > self.excerpt_max_chars:
            raise ValueError("excerpt_min_chars must be <= excerpt_max_chars")


@dataclass(frozen=True)
class InteractiveEntry:
    index: int
    tag: str
    visible_text: str
    xpath: str
    attrs: dict[str, str] = field(default_factory=dict)

    def render_line(self) -> str:
        return f'#{self.index} {self.tag} | "{self.visible_text}" | {self.xpath}'


@dataclass(frozen=True)
class BudgetReport:
    blocks_kept: int
    blocks_dropped: int
    interactive_kept: int
    interactive_chars_used: int


@dataclass(frozen=True)
class ShortenedContext:
    headings: list[str]
    text_blocks: list[str]
    excerpt: str
    interactive_entries: list[InteractiveEntry]
    budget_report: BudgetReport


def global_excerpt(full_text: str, cfg: ShorterConfig) -> str:
    """Prefix excerpt of length clamp(round(ratio*len), min, max), capped at the
    source length; empty text yields ""."""
    n = len(full_text)
    if n == 0:
        return ""
    want = math.floor(cfg.excerpt_ratio * n + 0.5)  # round half up
    want = max(cfg.excerpt_min_chars, min(cfg.excerpt_max_chars, want))
    return full_text[: min(want, n)]


def _entry_xpath(element_xpath: str, dom: DomTree, cfg: ShorterConfig) -> str:
    # The id predicate is the only attribute field our grammar carries; an
    # oversize id falls back to the positional form so field caps never break
    # grounding.
    if element_xpath.startswith(_ID_FORM_PREFIX) and element_xpath.endswith("']"):
        id_value = element_xpath[len(_ID_FORM_PREFIX):-2]
        if len(id_value) > cfg.xpath_attr_field_max:
            node = resolve_xpath(dom, element_xpath)
            if node is not None:
                return generate_xpath(node, "absolute")
    return element_xpath


def shorten(dom: DomTree, index: ElementIndex, cfg: ShorterConfig | None = None) -> ShortenedContext:
    """Compress a parsed page to the configured budgets (prefix selection)."""
    cfg = cfg or ShorterConfig()

    headings: list[str] = []
    if cfg.headings_enabled:
        headings = [
            text[: cfg.max_heading_chars]
            for _, text in extract_headings(dom)[: cfg.max_headings]
        ]

    all_blocks = extract_text_blocks(dom)
    text_blocks = [b[: cfg.max_block_chars] for b in all_blocks[: cfg.max_text_blocks]]
    blocks_dropped = len(all_blocks) - len(text_blocks)

    excerpt = global_excerpt(page_text(dom), cfg)

    entries: list[InteractiveEntry] = []
    chars_used = 0
    for position, element in enumerate(index.elements[: cfg.max_interactive]):
        text = element.visible_text[: cfg.max_element_text_chars]
        if chars_used + len(text) > cfg.interactive_text_budget_chars:
            break  # budget exhausted: drop this and all trailing entries
        chars_used += len(text)
        entries.append(
            InteractiveEntry(
                index=position,
                tag=element.tag,
                visible_text=text,
                xpath=_entry_xpath(element.xpath, dom, cfg),
                attrs={k: v[: cfg.xpath_attr_field_max] for k, v in element.attrs.items()},
            )
        )

    return ShortenedContext(
        headings=headings,
        text_blocks=text_blocks,
        excerpt=excerpt,
        interactive_entries=entries,
        budget_report=BudgetReport(
            blocks_kept=len(text_blocks),
            blocks_dropped=blocks_dropped,
            interactive_kept=len(entries),
            interactive_chars_used=chars_used,
        ),
    )


def estimate_tokens(text: str, cfg: ShorterConfig | None = None) -> int:
    """ceil(chars / chars_per_token); deterministic stand-in for a tokenizer."""
    cfg = cfg or ShorterConfig()
    return -(-len(text) // cfg.chars_per_token)


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------

PLACEHOLDERS = (
    "PAGE_META", "HEADINGS", "TEXT_BLOCKS", "EXCERPT",
    "INTERACTIVE_ELEMENTS", "END_MARKER",
)

_TEMPLATE_DIR = Path(__file__).parent / "templates"


@dataclass(frozen=True)
class PromptTemplate:
    """Plain-text template with {NAME} placeholders, filled by literal
    replacement (templates may contain JSON braces)."""
    text: str

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        return cls(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def builtin(cls, name: str) -> "PromptTemplate":
        return cls.from_file(_TEMPLATE_DIR / f"{name}.txt")

    def fill(self, values: dict[str, str]) -> str:
        out = self.text
        for key, value in values.items():
            out = out.replace("{" + key + "}", value)
        return out


def render_prompt(ctx: ShortenedContext, page_meta: str, template: PromptTemplate,
                  end_marker: str = "</JSON>") -> str:
    """Deterministic prompt with the five fixed-order sections."""
    return template.fill({
        "PAGE_META": page_meta,
        "HEADINGS": "\n".join(ctx.headings),
        "TEXT_BLOCKS": "\n".join(ctx.text_blocks),
        "EXCERPT": ctx.excerpt,
        "INTERACTIVE_ELEMENTS": "\n".join(e.render_line() for e in ctx.interactive_entries),
        "END_MARKER": end_marker,
    })
