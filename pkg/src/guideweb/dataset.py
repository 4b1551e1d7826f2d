"""Corpus construction and bookkeeping: page snapshots, the on-disk layout
(<root>/<site>/page.html + annotations.json), deterministic train/test splits,
long-sample filtering, and benchmark statistics.

The split shuffle is pinned for cross-implementation reproducibility:
sites are sorted lexicographically, then Fisher-Yates shuffled with draws from
splitmix64 (constants 0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9,
0x94D049BB133111EB), using j = next() mod (i+1).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable
from urllib.parse import urlparse

import httpx

from . import dom as dom_mod
from .schema import (
    CANONICAL_ACTION_TYPES,
    GUIDE_CAP,
    PageAnnotation,
    parse_and_validate,
    serialize,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 13
DEFAULT_TRAIN_RATIO = 0.75
DEFAULT_VIEWPORT = (1280, 720)

SPLITS_FILE = "splits.json"
DROPPED_SAMPLES_FILE = "dropped_samples.jsonl"
REVIEW_STATE_FILE = "review_state.json"
CRAWL_LOG_FILE = "crawl_log.jsonl"


class CorpusError(Exception):
    pass


class FetchError(Exception):
    pass


class FetchStatusError(FetchError):
    pass


class FetchContentTypeError(FetchError):
    pass


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

@dataclass
class PageSnapshot:
    site: str
    url: str
    html: bytes
    fetched_at: str
    final_url: str = ""
    viewport: tuple[int, int] = DEFAULT_VIEWPORT

    def meta(self) -> dict:
        return {
            "site": self.site,
            "url": self.url,
            "final_url": self.final_url or self.url,
            "fetched_at": self.fetched_at,
            "viewport": {"width": self.viewport[0], "height": self.viewport[1]},
        }


@dataclass(frozen=True)
class FetchConfig:
    timeout: float = 20.0
    max_redirects: int = 5
    user_agent: str = "guideweb-crawler/0.1"


def site_id_for(url: str) -> str:
    host = urlparse(url).hostname or url
    return host.lower()


def fetch_snapshot(url: str, cfg: FetchConfig | None = None,
                   client: httpx.Client | None = None) -> PageSnapshot:
    """Single GET with up to max_redirects follows; body stored verbatim."""
    cfg = cfg or FetchConfig()
    own_client = client is None
    if own_client:
        client = httpx.Client(
            follow_redirects=True,
            max_redirects=cfg.max_redirects,
            timeout=cfg.timeout,
            headers={"User-Agent": cfg.user_agent},
        )
    try:
        try:
            response = client.get(url)
        except httpx.HTTPError as exc:
            raise FetchError(f"network error fetching {url}: {exc}") from exc
        if not (200 <= response.status_code < 300):
            raise FetchStatusError(f"{url} returned status {response.status_code}")
        content_type = response.headers.get("content-type", "").lower()
        if content_type and "html" not in content_type:
            raise FetchContentTypeError(f"{url} returned non-HTML content type {content_type!r}")
        return PageSnapshot(
            site=site_id_for(url),
            url=url,
            html=response.content,
            fetched_at=datetime.now(timezone.utc).isoformat(),
            final_url=str(response.url),
        )
    finally:
        if own_client:
            client.close()


def passes_structural_filter(snapshot: PageSnapshot, min_interactive: int = 5) -> bool:
    """Keep only pages exposing at least min_interactive interactive elements."""
    tree = dom_mod.parse_html(snapshot.html)
    index = dom_mod.extract_interactive_elements(tree, source_site=snapshot.site)
    return len(index.elements) >= min_interactive


def read_seed_list(path: str | Path) -> list[tuple[int, str]]:
    """rank,domain CSV (Umbrella top-list format, no header)."""
    rows: list[tuple[int, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or len(row) < 2:
                continue
            rows.append((int(row[0]), row[1].strip()))
    return rows


# ---------------------------------------------------------------------------
# Corpus layout
# ---------------------------------------------------------------------------

def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_snapshot(root: str | Path, snapshot: PageSnapshot) -> Path:
    site_dir = Path(root) / snapshot.site
    atomic_write_bytes(site_dir / "page.html", snapshot.html)
    return site_dir


def append_crawl_log(root: str | Path, snapshot: PageSnapshot) -> None:
    path = Path(root) / CRAWL_LOG_FILE
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(snapshot.meta(), ensure_ascii=False) + "\n")


def save_annotation(root: str | Path, page: PageAnnotation) -> Path:
    path = Path(root) / page.site / "annotations.json"
    atomic_write_text(path, serialize(page))
    return path


def list_sites(root: str | Path) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} does not exist")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def load_page_html(root: str | Path, site: str) -> bytes:
    path = Path(root) / site / "page.html"
    if not path.is_file():
        raise CorpusError(f"missing page.html for site {site!r}")
    return path.read_bytes()


def load_annotation(root: str | Path, site: str) -> PageAnnotation:
    path = Path(root) / site / "annotations.json"
    if not path.is_file():
        raise CorpusError(f"missing annotations.json for site {site!r}")
    return parse_and_validate(path.read_text(encoding="utf-8"))


def load_corpus(root: str | Path) -> dict[str, PageAnnotation]:
    """site -> validated PageAnnotation for every site directory."""
    pages: dict[str, PageAnnotation] = {}
    for site in list_sites(root):
        pages[site] = load_annotation(root, site)
    return pages


def check_layout(root: str | Path) -> list[str]:
    """Layout-integrity problems: each site directory must contain exactly
    page.html and annotations.json."""
    problems: list[str] = []
    for site in list_sites(root):
        site_dir = Path(root) / site
        names = sorted(p.name for p in site_dir.iterdir())
        if names != ["annotations.json", "page.html"]:
            problems.append(f"{site}: expected exactly page.html and annotations.json, found {names}")
    return problems


# ---------------------------------------------------------------------------
# Train/test split
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


class _SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def seeded_shuffle(items: list[str], seed: int) -> list[str]:
    """Fisher-Yates over a sorted copy, driven by splitmix64."""
    out = sorted(items)
    rng = _SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


@dataclass(frozen=True)
class SplitManifest:
    seed: int
    train_ratio: float
    train_sites: tuple[str, ...]
    test_sites: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratio": {"train": self.train_ratio, "test": round(1 - self.train_ratio, 10)},
            "train_sites": list(self.train_sites),
            "test_sites": list(self.test_sites),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        data = json.loads(text)
        return cls(
            seed=data["seed"],
            train_ratio=data["ratio"]["train"],
            train_sites=tuple(data["train_sites"]),
            test_sites=tuple(data["test_sites"]),
        )


def split_corpus(sites: Iterable[str], ratio: float = DEFAULT_TRAIN_RATIO,
                 seed: int = DEFAULT_SEED) -> SplitManifest:
    """Deterministic seeded shuffle then prefix split; floor rule for train size."""
    site_list = list(sites)
    if not site_list:
        raise CorpusError("cannot split an empty site list")
    if len(set(site_list)) != len(site_list):
        raise CorpusError("site list contains duplicates")
    shuffled = seeded_shuffle(site_list, seed)
    n_train = math.floor(ratio * len(shuffled))
    return SplitManifest(
        seed=seed,
        train_ratio=ratio,
        train_sites=tuple(shuffled[:n_train]),
        test_sites=tuple(shuffled[n_train:]),
    )


def save_split(root: str | Path, manifest: SplitManifest) -> Path:
    path = Path(root) / SPLITS_FILE
    atomic_write_text(path, manifest.to_json())
    return path


# ---------------------------------------------------------------------------
# Long-sample filtering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleLimits:
    max_prompt_tokens: int = 3950
    max_output_tokens: int = 2000
    max_sequence_tokens: int = 6014
    drop_total_over: int = 5200
    near_limit_fraction: float = 0.98

    def __post_init__(self) -> None:
        if self.drop_total_over > self.max_sequence_tokens:
            raise ValueError("drop_total_over must be <= max_sequence_tokens")


@dataclass(frozen=True)
class TrainingSample:
    site: str
    prompt: str
    target: str


@dataclass(frozen=True)
class DroppedSample:
    site: str
    reason: str
    prompt_tokens: int
    output_tokens: int
    total_tokens: int

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "reason": self.reason,
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
            "total_tokens": self.total_tokens,
        }


def filter_long_samples(
    samples: Iterable[TrainingSample],
    limits: SampleLimits,
    estimator: Callable[[str], int],
) -> tuple[list[TrainingSample], list[DroppedSample]]:
    """Drop samples whose estimated totals exceed drop_total_over or whose
    prompt/output sit at or above near_limit_fraction of their maximums."""
    kept: list[TrainingSample] = []
    dropped: list[DroppedSample] = []
    prompt_cut = limits.near_limit_fraction * limits.max_prompt_tokens
    output_cut = limits.near_limit_fraction * limits.max_output_tokens
    for sample in samples:
        prompt_tokens = estimator(sample.prompt)
        output_tokens = estimator(sample.target)
        total = prompt_tokens + output_tokens
        reason = None
        if total > limits.drop_total_over:
            reason = "total_tokens_over_limit"
        elif prompt_tokens >= prompt_cut:
            reason = "prompt_near_limit"
        elif output_tokens >= output_cut:
            reason = "output_near_limit"
        if reason is None:
            kept.append(sample)
        else:
            dropped.append(DroppedSample(sample.site, reason, prompt_tokens, output_tokens, total))
    return kept, dropped


def write_dropped_samples(root: str | Path, dropped: Iterable[DroppedSample]) -> Path:
    path = Path(root) / DROPPED_SAMPLES_FILE
    lines = [json.dumps(d.to_dict(), ensure_ascii=False) for d in dropped]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return path


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class StatsReport:
    total_pages: int
    needs_guides_count: int
    needs_guides_ratio: float
    total_guides: int
    avg_guides_guide_bearing: float
    avg_guides_all_pages: float
    pages_at_cap: int
    action_type_counts: dict[str, int]
    page_category_counts: dict[str, int]
    other_family_types: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total_pages": self.total_pages,
            "needs_guides_count": self.needs_guides_count,
            "needs_guides_ratio": round(self.needs_guides_ratio, 4),
            "total_guides": self.total_guides,
            "avg_guides_guide_bearing": round(self.avg_guides_guide_bearing, 4),
            "avg_guides_all_pages": round(self.avg_guides_all_pages, 4),
            "pages_at_cap": self.pages_at_cap,
            "action_type_counts": dict(self.action_type_counts),
            "page_category_counts": dict(self.page_category_counts),
            "other_family_types": list(self.other_family_types),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def compute_stats(
    pages: Iterable[PageAnnotation],
    merge_threshold: int = 50,
    excluded_sites: set[str] | None = None,
) -> StatsReport:
    """Benchmark statistics; action types with fewer than merge_threshold
    guides merge into "other". excluded_sites (e.g. removed in review) are
    skipped entirely."""
    excluded = excluded_sites or set()
    page_list = [p for p in pages if p.site not in excluded]
    total = len(page_list)
    guide_bearing = [p for p in page_list if p.needs_guides]
    total_guides = sum(len(p.annotations) for p in page_list)

    raw_action_counts: Counter[str] = Counter()
    category_counts: Counter[str] = Counter()
    for page in page_list:
        category_counts[page.page_category] += 1
        for ann in page.annotations:
            raw_action_counts[ann.action_type] += 1

    merged: Counter[str] = Counter()
    for action_type, count in raw_action_counts.items():
        if action_type != "other" and count < merge_threshold:
            merged["other"] += count
        else:
            merged[action_type] += count

    other_family = sorted(
        t for t in raw_action_counts if t not in CANONICAL_ACTION_TYPES
    )

    n_bearing = len(guide_bearing)
    return StatsReport(
        total_pages=total,
        needs_guides_count=len(guide_bearing),
        needs_guides_ratio=(len(guide_bearing) / total) if total else 0.0,
        total_guides=total_guides,
        avg_guides_guide_bearing=(total_guides / n_bearing) if n_bearing else 0.0,
        avg_guides_all_pages=(total_guides / total) if total else 0.0,
        pages_at_cap=sum(1 for p in page_list if len(p.annotations) == GUIDE_CAP),
        action_type_counts=dict(sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))),
        page_category_counts=dict(sorted(category_counts.items(), key=lambda kv: (-kv[1], kv[0]))),
        other_family_types=other_family,
    )
