"""Local HTTP review service for human verification of the corpus.

Endpoints (JSON bodies, every response carries the site revision counter):
  GET  /pages                      page summaries
  GET  /pages/{site}               annotation + review state
  GET  /pages/{site}/html          stored snapshot bytes (script execution blocked)
  PUT  /pages/{site}/annotations   optimistic-concurrency write
  POST /pages/{site}/status        unreviewed | verified | removed
"""
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import dataset, dom as dom_mod
from .evaluation import normalize_xpath
from .schema import AnnotationValidationError, parse_and_validate

REVIEW_STATUSES = ("unreviewed", "verified", "removed")

_HTML_CSP = "script-src 'none'; object-src 'none'"


@dataclass
class ReviewState:
    status: str = "unreviewed"
    note: str = ""
    revision: int = 0


class ReviewStore:
    """Per-site review state persisted at <root>/review_state.json; writes are
    serialized and atomic."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._state: dict[str, ReviewState] = {}
        self._load()

    def _load(self) -> None:
        path = self.root / dataset.REVIEW_STATE_FILE
        if path.is_file():
            data = json.loads(path.read_text(encoding="utf-8"))
            self._state = {site: ReviewState(**entry) for site, entry in data.items()}

    def _persist(self) -> None:
        payload = {site: asdict(state) for site, state in sorted(self._state.items())}
        dataset.atomic_write_text(
            self.root / dataset.REVIEW_STATE_FILE,
            json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
        )

    def state_of(self, site: str) -> ReviewState:
        return self._state.get(site, ReviewState())

    def removed_sites(self) -> set[str]:
        return {site for site, st in self._state.items() if st.status == "removed"}

    def write_annotation_guarded(self, site: str, expected_revision: int,
                                   text: str) -> int:
        """Validate-then-write under the lock; returns the new revision."""
        with self._lock:
            state = self._state.setdefault(site, ReviewState())
            if expected_revision != state.revision:
                raise RevisionConflict(expected_revision, state.revision)
            dataset.atomic_write_text(self.root / site / "annotations.json", text)
            state.revision += 1
            self._persist()
            return state.revision

    def set_status(self, site: str, status: str, note: str) -> ReviewState:
        with self._lock:
            state = self._state.setdefault(site, ReviewState())
            state.status = status
            state.note = note
            state.revision += 1
            self._persist()
            return ReviewState(state.status, state.note, state.revision)


class RevisionConflict(Exception):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"stale write: expected revision {expected}, actual {actual}")


class AnnotationsPut(BaseModel):
    expected_revision: int
    annotation: dict


class StatusPost(BaseModel):
    status: str
    note: str = ""


def create_app(corpus_root: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    root = Path(corpus_root)
    app = FastAPI(title="guideweb review service")
    # local-only service, no auth in scope; permissive CORS lets the frontend
    # be served from a separate dev server
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = ReviewStore(root)
    app.state.store = store
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    def _require_site(site: str) -> None:
        if not (root / site).is_dir():
            raise HTTPException(status_code=404, detail=f"unknown site {site!r}")

    @app.get("/pages")
    def list_pages() -> dict:
        summaries = []
        for site in dataset.list_sites(root):
            state = store.state_of(site)
            try:
                page = dataset.load_annotation(root, site)
                needs_guides = page.needs_guides
                guide_count = len(page.annotations)
            except (dataset.CorpusError, AnnotationValidationError):
                needs_guides = False
                guide_count = 0
            summaries.append({
                "site": site,
                "needs_guides": needs_guides,
                "guide_count": guide_count,
                "status": state.status,
                "revision": state.revision,
            })
        return {"pages": summaries}

    @app.get("/pages/{site}")
    def get_page(site: str) -> dict:
        _require_site(site)
        try:
            page = dataset.load_annotation(root, site)
        except dataset.CorpusError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        state = store.state_of(site)
        return {
            "site": site,
            "annotation": page.to_dict(),
            "status": state.status,
            "note": state.note,
            "revision": state.revision,
        }

    @app.get("/pages/{site}/html")
    def get_page_html(site: str) -> Response:
        _require_site(site)
        try:
            html = dataset.load_page_html(root, site)
        except dataset.CorpusError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        state = store.state_of(site)
        return Response(
            content=html,
            media_type="text/html",
            headers={
                "Content-Security-Policy": _HTML_CSP,
                "X-Content-Type-Options": "nosniff",
                "X-Revision": str(state.revision),
            },
        )

    @app.put("/pages/{site}/annotations")
    def put_annotations(site: str, body: AnnotationsPut) -> dict:
        _require_site(site)
        text = json.dumps(body.annotation, ensure_ascii=False)
        try:
            page = parse_and_validate(text)
        except AnnotationValidationError as exc:
            raise HTTPException(
                status_code=422,
                detail={"violations": [
                    {"path": v.path, "rule": v.rule, "message": v.message}
                    for v in exc.violations
                ]},
            ) from exc
        if page.site != site:
            raise HTTPException(
                status_code=422,
                detail={"violations": [{
                    "path": "$.site", "rule": "site-mismatch",
                    "message": f"annotation site {page.site!r} does not match {site!r}",
                }]},
            )
        tree = dom_mod.parse_html(dataset.load_page_html(root, site))
        dangling = []
        for ann in page.annotations:
            try:
                node = dom_mod.resolve_xpath(tree, normalize_xpath(ann.xpath))
            except dom_mod.MalformedXPathError:
                node = None
            if node is None:
                dangling.append(ann.xpath)
        if dangling:
            raise HTTPException(
                status_code=422,
                detail={"violations": [{
                    "path": "$.annotations", "rule": "xpath-unresolvable",
                    "message": f"xpaths do not resolve in the stored snapshot: {dangling}",
                }]},
            )
        from .schema import serialize

        try:
            revision = store.write_annotation_guarded(
                site, body.expected_revision, serialize(page)
            )
        except RevisionConflict as exc:
            raise HTTPException(
                status_code=409,
                detail={"expected": exc.expected, "actual": exc.actual},
            ) from exc
        return {"site": site, "revision": revision}

    @app.post("/pages/{site}/status")
    def set_status(site: str, body: StatusPost) -> dict:
        _require_site(site)
        if body.status not in REVIEW_STATUSES:
            raise HTTPException(
                status_code=422,
                detail=f"status must be one of {REVIEW_STATUSES}",
            )
        state = store.set_status(site, body.status, body.note)
        return {"site": site, "status": state.status, "note": state.note,
                "revision": state.revision}

    return app


def serve(corpus_root: str | Path, host: str = "127.0.0.1", port: int = 8050,
          ui_dir: str | Path | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(corpus_root, ui_dir=ui_dir), host=host, port=port,
                log_level="info")
