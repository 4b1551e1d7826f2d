"""guideweb: element-grounded in-app guide annotation toolkit.

Pipeline pieces: error-recovering DOM parsing and interactive-element
indexing, budgeted page compression, two-stage LLM annotation with repair,
corpus layout and splits, a metric suite for scoring predictions, and a local
human-review HTTP service.
"""
from .dom import (
    DomTree,
    ElementIndex,
    ExtractionRules,
    InteractiveElement,
    extract_headings,
    extract_interactive_elements,
    extract_text_blocks,
    generate_xpath,
    parse_html,
    resolve_xpath,
    visible_text_of,
)
from .schema import (
    GUIDE_CAP,
    AnnotationValidationError,
    GuideAnnotation,
    PageAnnotation,
    parse_and_validate,
    repair_raw_output,
    serialize,
)
from .shorter import PromptTemplate, ShortenedContext, ShorterConfig, estimate_tokens, render_prompt, shorten

__version__ = "0.1.0"

__all__ = [
    "AnnotationValidationError",
    "DomTree",
    "ElementIndex",
    "ExtractionRules",
    "GUIDE_CAP",
    "GuideAnnotation",
    "InteractiveElement",
    "PageAnnotation",
    "PromptTemplate",
    "ShortenedContext",
    "ShorterConfig",
    "estimate_tokens",
    "extract_headings",
    "extract_interactive_elements",
    "extract_text_blocks",
    "generate_xpath",
    "parse_and_validate",
    "parse_html",
    "render_prompt",
    "repair_raw_output",
    "resolve_xpath",
    "serialize",
    "shorten",
    "visible_text_of",
]
