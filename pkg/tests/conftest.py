from __future__ import annotations

import random
from pathlib import Path

import pytest

from guideweb import dataset
from guideweb.schema import GuideAnnotation, PageAnnotation

FIXTURES = Path(__file__).parent / "fixtures"

FIXTURE_PAGES = (
    "nav_page", "malformed_page", "listing_page", "login_page", "empty_page",
)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def fixture_html(name: str) -> bytes:
    return (FIXTURES / f"{name}.html").read_bytes()


def make_annotation(site: str, xpaths: list[str], *, needs_guides: bool = True,
                    category: str = "landing", intents: list[str] | None = None,
                    guides: list[str] | None = None,
                    action_types: list[str] | None = None,
                    tags: list[str] | None = None,
                    texts: list[str] | None = None) -> PageAnnotation:
    annotations = tuple(
        GuideAnnotation(
            intent=(intents[i] if intents else f"Reach goal {i} on {site}"),
            action_type=(action_types[i] if action_types else "navigate"),
            guide_text=(guides[i] if guides else f"Click element {i} to continue."),
            tag=(tags[i] if tags else "a"),
            visible_text=(texts[i] if texts else f"Link {i}"),
            xpath=xpath,
        )
        for i, xpath in enumerate(xpaths)
    )
    return PageAnnotation(site=site, needs_guides=needs_guides,
                          page_category=category, annotations=annotations)


def write_corpus(root: Path, pages: dict[str, tuple[bytes, PageAnnotation]]) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for site, (html, page) in pages.items():
        snapshot = dataset.PageSnapshot(site=site, url=f"https://{site}/",
                                        html=html, fetched_at="2026-01-01T00:00:00+00:00")
        dataset.save_snapshot(root, snapshot)
        dataset.save_annotation(root, page)
    return root


_WORDS = (
    "account", "billing", "cloud", "dashboard", "export", "filter", "guide",
    "help", "invoice", "login", "menu", "order", "profile", "report", "search",
    "settings", "signup", "support", "trial", "upload",
)


def random_page_html(rng: random.Random) -> str:
    """Arbitrary small page: nested blocks, long texts, hidden subtrees, many
    controls; exercises every Shorter budget."""

    def words(n: int) -> str:
        return " ".join(rng.choice(_WORDS) for _ in range(n))

    parts = ["<html><head><title>", words(3), "</title></head><body>"]
    for _ in range(rng.randint(0, 30)):
        kind = rng.randrange(6)
        if kind == 0:
            parts.append(f"<h{rng.randint(1, 6)}>{words(rng.randint(0, 30))}</h{rng.randint(1, 6)}>")
        elif kind == 1:
            parts.append(f"<p>{words(rng.randint(0, 200))}</p>")
        elif kind == 2:
            hidden = " hidden" if rng.random() < 0.2 else ""
            parts.append(f"<div{hidden}><div>{words(rng.randint(0, 40))}</div></div>")
        elif kind == 3:
            items = "".join(f"<li>{words(rng.randint(0, 10))}</li>" for _ in range(rng.randint(1, 8)))
            parts.append(f"<ul>{items}</ul>")
        elif kind == 4:
            n = rng.randint(1, 40)
            attr = f' id="id{rng.randrange(999)}"' if rng.random() < 0.3 else ""
            links = "".join(
                f'<a href="/{i}"{attr if i == 0 else ""}>{words(rng.randint(0, 8))}</a>'
                for i in range(n)
            )
            parts.append(f"<nav>{links}</nav>")
        else:
            parts.append(
                f'<form><input type="text" placeholder="{words(2)}">'
                f"<button>{words(rng.randint(0, 60))}</button></form>"
            )
    parts.append("</body></html>")
    return "".join(parts)


def synthetic_page_html(n_links: int, seed: int = 0) -> bytes:
    """Small deterministic page with n_links anchors for corpus tests."""
    rng = random.Random(seed)
    words = ["alpha", "beta", "gamma", "delta", "omega", "sigma"]
    links = "\n".join(
        f'<a href="/{i}">{rng.choice(words)} {i}</a>' for i in range(n_links)
    )
    return (
        "<html><head><title>synthetic</title></head><body>"
        f"<h1>Synthetic</h1>\n{links}\n<p>Generated page.</p>"
        "</body></html>"
    ).encode()
