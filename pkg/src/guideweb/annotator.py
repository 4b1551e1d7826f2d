"""Two-stage LLM-assisted page annotation with a regeneration/repair loop.

Stage 1 decides whether the page needs guidance and assigns a category;
stage 2 selects guide targets from the element index and writes guide text.
Invalid completions are re-prompted with the error up to max_repair_attempts;
ungrounded targets are dropped, overflow beyond the guide cap is truncated in
model-output order.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from . import dom as dom_mod
from .schema import (
    GUIDE_CAP,
    GuideAnnotation,
    PageAnnotation,
    normalize_action_type,
    repair_raw_output,
    validate_page,
)
from .shorter import (
    PromptTemplate,
    ShortenedContext,
    ShorterConfig,
    estimate_tokens,
    render_prompt,
    shorten,
)

logger = logging.getLogger(__name__)

ENV_API_BASE = "GUIDEWEB_API_BASE"
ENV_API_KEY = "GUIDEWEB_API_KEY"
ENV_MODEL = "GUIDEWEB_MODEL"


class AnnotationFailed(Exception):
    """A stage exhausted its repair attempts without a valid output."""


class ChatError(Exception):
    pass


class ChatAuthError(ChatError):
    pass


class ChatRateLimitError(ChatError):
    pass


class ChatTimeoutError(ChatError):
    pass


@dataclass
class ChatClientConfig:
    api_base: str = ""
    api_key: str = ""
    model: str = ""
    max_input_tokens: int = 130000
    temperature: float = 0.0
    request_timeout: float = 60.0
    max_retries_network: int = 3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.max_input_tokens <= 0:
            raise ValueError("max_input_tokens must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def with_env_overrides(self) -> "ChatClientConfig":
        return ChatClientConfig(
            api_base=os.environ.get(ENV_API_BASE, self.api_base),
            api_key=os.environ.get(ENV_API_KEY, self.api_key),
            model=os.environ.get(ENV_MODEL, self.model),
            max_input_tokens=self.max_input_tokens,
            temperature=self.temperature,
            request_timeout=self.request_timeout,
            max_retries_network=self.max_retries_network,
            max_in_flight=self.max_in_flight,
        )


class ChatClient(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class HttpChatClient:
    """Chat-completion client over the role-tagged-messages-in, text-out wire
    shape; retries transient failures with exponential backoff and caps
    concurrent requests at cfg.max_in_flight."""

    def __init__(self, cfg: ChatClientConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if not cfg.api_base:
            raise ValueError("api_base must be non-empty")
        self.cfg = cfg
        self._sleep = sleep
        self._in_flight = threading.BoundedSemaphore(cfg.max_in_flight)
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        self._client = httpx.Client(
            base_url=cfg.api_base.rstrip("/"),
            headers=headers,
            timeout=cfg.request_timeout,
            transport=transport,
        )

    def complete(self, messages: list[dict]) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
        }
        attempts = self.cfg.max_retries_network + 1
        delay = 0.5
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                with self._in_flight:
                    response = self._client.post("/chat/completions", json=payload)
            except httpx.TimeoutException as exc:
                last_error = ChatTimeoutError(f"request timed out: {exc}")
            except httpx.HTTPError as exc:
                last_error = ChatError(f"network error: {exc}")
            else:
                if response.status_code in (401, 403):
                    raise ChatAuthError(f"authentication failed ({response.status_code})")
                if response.status_code == 429:
                    last_error = ChatRateLimitError("rate limited (429)")
                elif response.status_code >= 500:
                    last_error = ChatError(f"server error ({response.status_code})")
                else:
                    data = response.json()
                    return data["choices"][0]["message"]["content"]
            if attempt < attempts - 1:
                self._sleep(delay)
                delay *= 2
        assert last_error is not None
        raise last_error

    def close(self) -> None:
        self._client.close()


class MockChatClient:
    """Test double replaying scripted completions in order."""

    def __init__(self, transcripts: list[str]):
        self._transcripts = list(transcripts)
        self.calls: list[list[dict]] = []

    def complete(self, messages: list[dict]) -> str:
        self.calls.append(messages)
        if not self._transcripts:
            raise AssertionError("mock transcript exhausted")
        return self._transcripts.pop(0)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class AnnotationRunConfig:
    max_repair_attempts: int = 3
    guide_cap: int = GUIDE_CAP
    use_shorter: bool = True
    stage1_template: str | Path | None = None
    stage2_template: str | Path | None = None
    end_marker: str = "</JSON>"
    shorter: ShorterConfig = field(default_factory=ShorterConfig)
    max_input_tokens: int = 130000

    def __post_init__(self) -> None:
        if self.max_repair_attempts < 1:
            raise ValueError("max_repair_attempts must be >= 1")
        if self.guide_cap < 1:
            raise ValueError("guide_cap must be >= 1")

    def load_templates(self) -> tuple[PromptTemplate, PromptTemplate]:
        stage1 = (PromptTemplate.from_file(self.stage1_template)
                  if self.stage1_template else PromptTemplate.builtin("stage1"))
        stage2 = (PromptTemplate.from_file(self.stage2_template)
                  if self.stage2_template else PromptTemplate.builtin("stage2"))
        return stage1, stage2


@dataclass
class AnnotationProvenance:
    site: str = ""
    stage1_attempts: int = 0
    stage2_attempts: int = 0
    dropped_ungrounded: int = 0
    truncated_over_cap: int = 0

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "stage1_attempts": self.stage1_attempts,
            "stage2_attempts": self.stage2_attempts,
            "dropped_ungrounded": self.dropped_ungrounded,
            "truncated_over_cap": self.truncated_over_cap,
        }


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _attempt_loop(client: ChatClient, prompt: str, parse: Callable[[str], object],
                  cfg: AnnotationRunConfig, stage: str) -> tuple[object, int]:
    """Prompt, repair, parse; on failure re-prompt with the error appended.
    Returns (parsed value, attempts used)."""
    messages = [{"role": "user", "content": prompt}]
    last_error = "invalid output"
    for attempt in range(1, cfg.max_repair_attempts + 1):
        completion = client.complete(messages)
        candidate = repair_raw_output(completion, cfg.end_marker)
        if candidate is None:
            last_error = "no JSON object found in output"
        else:
            try:
                return parse(candidate), attempt
            except (ValueError, KeyError, TypeError) as exc:
                last_error = str(exc)
        logger.warning("%s attempt %d failed: %s", stage, attempt, last_error)
        messages = [
            {"role": "user", "content": prompt},
            {
                "role": "user",
                "content": (
                    f"Your previous output was invalid: {last_error}\n"
                    f"Reply again with exactly one valid JSON object, ending with {cfg.end_marker}"
                ),
            },
        ]
    raise AnnotationFailed(f"{stage} failed after {cfg.max_repair_attempts} attempts: {last_error}")


def _parse_stage1(candidate: str) -> tuple[bool, str]:
    data = json.loads(candidate)
    if not isinstance(data, dict):
        raise ValueError("stage 1 output must be a JSON object")
    needs_guides = data.get("needs_guides")
    page_category = data.get("page_category")
    if not isinstance(needs_guides, bool):
        raise ValueError("needs_guides must be a boolean")
    if not isinstance(page_category, str) or not page_category.strip():
        raise ValueError("page_category must be a non-empty string")
    return needs_guides, page_category.strip()


def stage1_page_analysis(client: ChatClient, prompt: str,
                         cfg: AnnotationRunConfig) -> tuple[bool, str, int]:
    """Page-level analysis: (needs_guides, page_category, attempts)."""
    result, attempts = _attempt_loop(client, prompt, _parse_stage1, cfg, "stage1")
    needs_guides, category = result  # type: ignore[misc]
    return needs_guides, category, attempts


def _grounded_xpaths(index: dom_mod.ElementIndex) -> set[str]:
    from .evaluation import normalize_xpath

    return {normalize_xpath(x) for x in index.xpaths()}


def stage2_generate_guides(
    client: ChatClient,
    prompt: str,
    index: dom_mod.ElementIndex,
    cfg: AnnotationRunConfig,
    provenance: AnnotationProvenance | None = None,
) -> tuple[list[GuideAnnotation], int]:
    """Guide generation for a page already judged guide-worthy. Ungrounded
    targets are dropped; overflow beyond guide_cap is truncated in model-output
    order; an all-dropped result re-prompts."""
    from .evaluation import normalize_xpath

    grounded = _grounded_xpaths(index)
    provenance = provenance if provenance is not None else AnnotationProvenance()

    def parse(candidate: str) -> list[GuideAnnotation]:
        data = json.loads(candidate)
        raw_list = data.get("annotations") if isinstance(data, dict) else data
        if not isinstance(raw_list, list):
            raise ValueError("stage 2 output must contain an annotations list")
        annotations: list[GuideAnnotation] = []
        for i, raw in enumerate(raw_list):
            if not isinstance(raw, dict):
                raise ValueError(f"annotations[{i}] must be an object")
            try:
                ann = GuideAnnotation(
                    intent=str(raw["intent"]),
                    action_type=normalize_action_type(str(raw["action_type"])),
                    guide_text=str(raw["guide_text"]),
                    tag=str(raw["tag"]).strip().lower(),
                    visible_text=str(raw.get("visible_text", "")),
                    xpath=str(raw["xpath"]).strip(),
                )
            except KeyError as exc:
                raise ValueError(f"annotations[{i}] is missing field {exc}") from exc
            annotations.append(ann)

        kept = []
        for ann in annotations:
            if normalize_xpath(ann.xpath) in grounded:
                kept.append(ann)
            else:
                provenance.dropped_ungrounded += 1
                logger.warning("dropping ungrounded guide target %s", ann.xpath)
        if annotations and not kept:
            raise ValueError("every proposed guide target was ungrounded")
        if len(kept) > cfg.guide_cap:
            provenance.truncated_over_cap += len(kept) - cfg.guide_cap
            logger.warning(
                "truncating %d guides to the cap of %d", len(kept), cfg.guide_cap
            )
            kept = kept[: cfg.guide_cap]
        page_shape = PageAnnotation(
            site="stage2-check", needs_guides=True, page_category="check",
            annotations=tuple(kept),
        )
        violations = [v for v in validate_page(page_shape)]
        if violations:
            raise ValueError("; ".join(str(v) for v in violations))
        return kept

    result, attempts = _attempt_loop(client, prompt, parse, cfg, "stage2")
    return list(result), attempts  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Page orchestration
# ---------------------------------------------------------------------------

def _page_meta(site: str, url: str, category: str | None = None) -> str:
    lines = [f"site: {site}", f"url: {url or 'unknown'}", "viewport: 1280x720"]
    if category is not None:
        lines.append(f"page_category: {category}")
    return "\n".join(lines)


def _raw_page_context(html_text: str, index: dom_mod.ElementIndex) -> ShortenedContext:
    # Baseline path (use_shorter=false): the raw page stands in for the
    # compressed sections; element lines stay untruncated for grounding.
    from .shorter import BudgetReport, InteractiveEntry

    entries = [
        InteractiveEntry(index=i, tag=e.tag, visible_text=e.visible_text,
                         xpath=e.xpath, attrs=dict(e.attrs))
        for i, e in enumerate(index.elements)
    ]
    return ShortenedContext(
        headings=[],
        text_blocks=[html_text],
        excerpt="",
        interactive_entries=entries,
        budget_report=BudgetReport(1, 0, len(entries), sum(len(e.visible_text) for e in entries)),
    )


def annotate_page(
    snapshot,
    cfg: AnnotationRunConfig,
    client: ChatClient,
    provenance: AnnotationProvenance | None = None,
) -> PageAnnotation:
    """Full per-page pipeline: parse, extract, shorten, stage 1, stage 2,
    validate. Raises AnnotationFailed when a stage exhausts its attempts."""
    provenance = provenance if provenance is not None else AnnotationProvenance()
    provenance.site = snapshot.site
    tree = dom_mod.parse_html(snapshot.html)
    index = dom_mod.extract_interactive_elements(tree, source_site=snapshot.site)

    if cfg.use_shorter:
        ctx = shorten(tree, index, cfg.shorter)
    else:
        html_text = snapshot.html.decode("utf-8", errors="replace") if isinstance(
            snapshot.html, bytes) else str(snapshot.html)
        ctx = _raw_page_context(html_text, index)

    stage1_tpl, stage2_tpl = cfg.load_templates()
    prompt1 = render_prompt(ctx, _page_meta(snapshot.site, getattr(snapshot, "url", "")),
                            stage1_tpl, cfg.end_marker)
    prompt1 = _cap_prompt(prompt1, cfg)

    needs_guides, category, attempts1 = stage1_page_analysis(client, prompt1, cfg)
    provenance.stage1_attempts = attempts1

    if not index.elements:
        needs_guides = False  # no grounded targets exist: skip stage 2

    annotations: tuple[GuideAnnotation, ...] = ()
    if needs_guides:
        prompt2 = render_prompt(
            ctx, _page_meta(snapshot.site, getattr(snapshot, "url", ""), category),
            stage2_tpl, cfg.end_marker,
        )
        prompt2 = _cap_prompt(prompt2, cfg)
        guides, attempts2 = stage2_generate_guides(client, prompt2, index, cfg, provenance)
        provenance.stage2_attempts = attempts2
        annotations = tuple(guides)

    page = PageAnnotation(
        site=snapshot.site,
        needs_guides=needs_guides,
        page_category=category,
        annotations=annotations,
    )
    violations = validate_page(page)
    if violations:
        raise AnnotationFailed(
            "annotated page failed validation: " + "; ".join(str(v) for v in violations)
        )
    return page


def _cap_prompt(prompt: str, cfg: AnnotationRunConfig) -> str:
    max_chars = cfg.max_input_tokens * cfg.shorter.chars_per_token
    if estimate_tokens(prompt, cfg.shorter) > cfg.max_input_tokens:
        logger.warning("prompt exceeds %d tokens; truncating", cfg.max_input_tokens)
        return prompt[:max_chars]
    return prompt
