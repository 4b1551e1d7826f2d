"""Command-line entry point wiring the pipeline:
crawl, index, shorten, annotate, validate, split, filter, stats, eval, serve.

Option precedence: flags > environment > config file > defaults. Machine
readable output goes to files under the corpus root; human summaries to stdout.
"""
from __future__ import annotations

import json
import logging
import sys
import time
from pathlib import Path

import click
import yaml

from . import annotator as annotator_mod
from . import dataset, dom as dom_mod, evaluation, review, schema
from .shorter import PromptTemplate, ShorterConfig, estimate_tokens, render_prompt, shorten

logger = logging.getLogger(__name__)

CONFIG_KEYS = (
    "corpus", "seed", "ratio", "min_interactive", "max_repair_attempts",
    "use_shorter", "model", "api_base", "bind",
)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise click.UsageError(f"config file {path} must contain a mapping")
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def _setting(ctx_obj: dict, key: str, flag_value, default):
    """flags > env (handled by click envvar) > config file > default."""
    if flag_value is not None:
        return flag_value
    if key in ctx_obj.get("config", {}):
        return ctx_obj["config"][key]
    return default


@click.group()
@click.option("--corpus", "corpus_root", type=click.Path(), default=None,
              help="Corpus root directory.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML or JSON config file; flags and env vars take precedence.")
@click.option("--log-level", default="INFO", show_default=True)
@click.pass_context
def cli(ctx: click.Context, corpus_root: str | None, config_path: str | None,
        log_level: str) -> None:
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config(config_path)
    ctx.obj["corpus"] = _setting(ctx.obj, "corpus", corpus_root, None)


def _corpus_root(ctx_obj: dict, must_exist: bool = True) -> Path:
    corpus = ctx_obj.get("corpus")
    if not corpus:
        raise click.UsageError("--corpus is required")
    root = Path(corpus)
    if must_exist and not root.is_dir():
        raise click.ClickException(f"corpus root {root} does not exist")
    return root


@cli.command()
@click.option("--seeds", "seed_csv", type=click.Path(exists=True), required=True,
              help="rank,domain CSV of candidate sites.")
@click.option("--limit", type=int, default=None, help="Fetch at most N sites.")
@click.option("--min-interactive", type=int, default=None)
@click.option("--scheme", default="https", show_default=True)
@click.option("--delay", type=float, default=0.0, show_default=True,
              help="Politeness delay between fetches, seconds.")
@click.pass_context
def crawl(ctx: click.Context, seed_csv: str, limit: int | None,
          min_interactive: int | None, scheme: str, delay: float) -> None:
    """Fetch main-page snapshots for seed domains into the corpus."""
    root = _corpus_root(ctx.obj, must_exist=False)
    root.mkdir(parents=True, exist_ok=True)
    min_interactive = _setting(ctx.obj, "min_interactive", min_interactive, 5)
    kept = skipped = failed = 0
    for rank, domain in dataset.read_seed_list(seed_csv):
        if limit is not None and kept >= limit:
            break
        url = f"{scheme}://{domain}/"
        try:
            snapshot = dataset.fetch_snapshot(url)
        except dataset.FetchError as exc:
            failed += 1
            logger.warning("rank %d %s: %s", rank, domain, exc)
            continue
        if not dataset.passes_structural_filter(snapshot, min_interactive):
            skipped += 1
            continue
        dataset.save_snapshot(root, snapshot)
        dataset.append_crawl_log(root, snapshot)
        kept += 1
        if delay:
            time.sleep(delay)
    click.echo(f"crawl: kept {kept}, skipped {skipped} (structural filter), failed {failed}")


@cli.command()
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file (default <corpus>/element_index.jsonl).")
@click.option("--max-elements", type=int, default=2000, show_default=True)
@click.pass_context
def index(ctx: click.Context, out_path: str | None, max_elements: int) -> None:
    """Extract grounded interactive-element indexes for every site."""
    root = _corpus_root(ctx.obj)
    out = Path(out_path) if out_path else root / "element_index.jsonl"
    rules = dom_mod.ExtractionRules(max_elements=max_elements)
    lines = []
    for site in dataset.list_sites(root):
        tree = dom_mod.parse_html(dataset.load_page_html(root, site))
        idx = dom_mod.extract_interactive_elements(tree, rules, source_site=site)
        lines.append(json.dumps(
            {"site": site, "elements": [e.to_dict() for e in idx.elements]},
            ensure_ascii=False, sort_keys=True,
        ))
        click.echo(f"{site}: {len(idx.elements)} interactive elements")
    dataset.atomic_write_text(out, "\n".join(lines) + ("\n" if lines else ""))
    click.echo(f"wrote {out}")


@cli.command("shorten")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file (default <corpus>/shortened.jsonl).")
@click.option("--template", "template_path", type=click.Path(exists=True), default=None)
@click.pass_context
def shorten_cmd(ctx: click.Context, out_path: str | None, template_path: str | None) -> None:
    """Compress every page and render its stage-1 prompt."""
    root = _corpus_root(ctx.obj)
    out = Path(out_path) if out_path else root / "shortened.jsonl"
    cfg = ShorterConfig()
    template = (PromptTemplate.from_file(template_path) if template_path
                else PromptTemplate.builtin("stage1"))
    lines = []
    for site in dataset.list_sites(root):
        tree = dom_mod.parse_html(dataset.load_page_html(root, site))
        idx = dom_mod.extract_interactive_elements(tree, source_site=site)
        ctx_short = shorten(tree, idx, cfg)
        prompt = render_prompt(ctx_short, f"site: {site}", template, cfg.end_marker)
        report = ctx_short.budget_report
        lines.append(json.dumps({
            "site": site,
            "prompt": prompt,
            "prompt_tokens": estimate_tokens(prompt, cfg),
            "blocks_kept": report.blocks_kept,
            "blocks_dropped": report.blocks_dropped,
            "interactive_kept": report.interactive_kept,
            "interactive_chars_used": report.interactive_chars_used,
        }, ensure_ascii=False))
        click.echo(
            f"{site}: {report.blocks_kept} blocks, {report.interactive_kept} elements, "
            f"{estimate_tokens(prompt, cfg)} est. tokens"
        )
    dataset.atomic_write_text(out, "\n".join(lines) + ("\n" if lines else ""))
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--model", envvar=annotator_mod.ENV_MODEL, default=None)
@click.option("--api-base", envvar=annotator_mod.ENV_API_BASE, default=None)
@click.option("--api-key", envvar=annotator_mod.ENV_API_KEY, default=None)
@click.option("--max-repair-attempts", type=int, default=None)
@click.option("--use-shorter/--no-shorter", "use_shorter", default=None)
@click.option("--transcripts", "transcripts_path", type=click.Path(exists=True), default=None,
              help="Offline mode: JSON file of site -> list of canned completions.")
@click.option("--sites", "only_sites", multiple=True, help="Annotate only these sites.")
@click.pass_context
def annotate(ctx: click.Context, model: str | None, api_base: str | None,
             api_key: str | None, max_repair_attempts: int | None,
             use_shorter: bool | None, transcripts_path: str | None,
             only_sites: tuple[str, ...]) -> None:
    """Run the two-stage annotation loop over snapshots lacking annotations."""
    root = _corpus_root(ctx.obj)
    run_cfg = annotator_mod.AnnotationRunConfig(
        max_repair_attempts=_setting(ctx.obj, "max_repair_attempts", max_repair_attempts, 3),
        use_shorter=_setting(ctx.obj, "use_shorter", use_shorter, True),
    )
    transcripts = None
    if transcripts_path:
        transcripts = json.loads(Path(transcripts_path).read_text(encoding="utf-8"))

    def client_for(site: str) -> annotator_mod.ChatClient:
        if transcripts is not None:
            if site not in transcripts:
                raise click.ClickException(f"no transcript for site {site!r}")
            return annotator_mod.MockChatClient(transcripts[site])
        cfg = annotator_mod.ChatClientConfig(
            api_base=api_base or "", api_key=api_key or "",
            model=_setting(ctx.obj, "model", model, ""),
        ).with_env_overrides()
        if not cfg.api_base:
            raise click.UsageError(
                "--api-base, GUIDEWEB_API_BASE, or --transcripts is required"
            )
        return annotator_mod.HttpChatClient(cfg)

    sites = [s for s in dataset.list_sites(root)
             if not only_sites or s in only_sites]
    annotated = failed = 0
    log_lines = []
    for site in sites:
        if (root / site / "annotations.json").is_file():
            continue  # idempotent re-runs skip finished sites
        snapshot = dataset.PageSnapshot(
            site=site, url="", html=dataset.load_page_html(root, site), fetched_at="",
        )
        provenance = annotator_mod.AnnotationProvenance()
        try:
            page = annotator_mod.annotate_page(snapshot, run_cfg, client_for(site), provenance)
        except annotator_mod.AnnotationFailed as exc:
            failed += 1
            logger.error("%s: %s", site, exc)
            log_lines.append(json.dumps(
                {"site": site, "status": "failed", "error": str(exc)}, ensure_ascii=False))
            continue
        dataset.save_annotation(root, page)
        annotated += 1
        entry = provenance.to_dict()
        entry["status"] = "ok"
        log_lines.append(json.dumps(entry, ensure_ascii=False))
        click.echo(f"{site}: {len(page.annotations)} guides "
                   f"(stage1 attempts {provenance.stage1_attempts}, "
                   f"stage2 attempts {provenance.stage2_attempts})")
    if log_lines:
        with open(root / "annotation_log.jsonl", "a", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
    click.echo(f"annotate: {annotated} annotated, {failed} failed")
    if failed:
        raise click.exceptions.Exit(1)


@cli.command()
@click.pass_context
def validate(ctx: click.Context) -> None:
    """Validate layout, schema, and grounding of every stored annotation."""
    root = _corpus_root(ctx.obj)
    problems: list[str] = list(dataset.check_layout(root))
    for site in dataset.list_sites(root):
        try:
            page = dataset.load_annotation(root, site)
        except dataset.CorpusError as exc:
            problems.append(f"{site}: {exc}")
            continue
        except schema.AnnotationValidationError as exc:
            problems.extend(f"{site}/annotations.json {v}" for v in exc.violations)
            continue
        try:
            tree = dom_mod.parse_html(dataset.load_page_html(root, site))
        except dataset.CorpusError as exc:
            problems.append(f"{site}: {exc}")
            continue
        for i, ann in enumerate(page.annotations):
            try:
                node = dom_mod.resolve_xpath(tree, evaluation.normalize_xpath(ann.xpath))
            except dom_mod.MalformedXPathError:
                node = None
            if node is None:
                problems.append(
                    f"{site}/annotations.json $.annotations[{i}].xpath: "
                    f"[xpath-unresolvable] {ann.xpath} does not resolve in page.html"
                )
    report = {"valid": not problems, "problems": problems}
    dataset.atomic_write_text(root / "validation_report.json",
                              json.dumps(report, indent=2, ensure_ascii=False) + "\n")
    if problems:
        for problem in problems:
            click.echo(problem)
        raise click.exceptions.Exit(1)
    click.echo(f"validate: {len(dataset.list_sites(root))} sites OK")


@cli.command()
@click.option("--seed", type=int, default=None)
@click.option("--ratio", type=float, default=None)
@click.pass_context
def split(ctx: click.Context, seed: int | None, ratio: float | None) -> None:
    """Write a deterministic train/test split manifest (splits.json)."""
    root = _corpus_root(ctx.obj)
    seed = _setting(ctx.obj, "seed", seed, dataset.DEFAULT_SEED)
    ratio = _setting(ctx.obj, "ratio", ratio, dataset.DEFAULT_TRAIN_RATIO)
    removed = review.ReviewStore(root).removed_sites()
    sites = [s for s in dataset.list_sites(root) if s not in removed]
    try:
        manifest = dataset.split_corpus(sites, ratio=ratio, seed=seed)
    except dataset.CorpusError as exc:
        raise click.ClickException(str(exc)) from exc
    path = dataset.save_split(root, manifest)
    click.echo(f"split: {len(manifest.train_sites)} train / {len(manifest.test_sites)} test "
               f"(seed {seed}, ratio {ratio}) -> {path}")


@cli.command("filter")
@click.pass_context
def filter_cmd(ctx: click.Context) -> None:
    """Drop over-long training samples; record them in dropped_samples.jsonl."""
    root = _corpus_root(ctx.obj)
    cfg = ShorterConfig()
    limits = dataset.SampleLimits()
    template = PromptTemplate.builtin("stage2")
    samples = []
    for site in dataset.list_sites(root):
        try:
            page = dataset.load_annotation(root, site)
        except (dataset.CorpusError, schema.AnnotationValidationError):
            continue
        tree = dom_mod.parse_html(dataset.load_page_html(root, site))
        idx = dom_mod.extract_interactive_elements(tree, source_site=site)
        ctx_short = shorten(tree, idx, cfg)
        prompt = render_prompt(ctx_short, f"site: {site}", template, cfg.end_marker)
        samples.append(dataset.TrainingSample(site=site, prompt=prompt,
                                              target=schema.serialize(page)))
    kept, dropped = dataset.filter_long_samples(
        samples, limits, lambda text: estimate_tokens(text, cfg))
    dataset.write_dropped_samples(root, dropped)
    dataset.atomic_write_text(
        root / "filtered_samples.json",
        json.dumps({"kept_sites": [s.site for s in kept],
                    "dropped_count": len(dropped)}, indent=2) + "\n",
    )
    click.echo(f"filter: kept {len(kept)}, dropped {len(dropped)} "
               f"-> {root / dataset.DROPPED_SAMPLES_FILE}")


@cli.command()
@click.option("--merge-threshold", type=int, default=50, show_default=True)
@click.pass_context
def stats(ctx: click.Context, merge_threshold: int) -> None:
    """Corpus statistics (needs_guides ratio, guides per page, action types)."""
    root = _corpus_root(ctx.obj)
    removed = review.ReviewStore(root).removed_sites()
    pages = []
    for site in dataset.list_sites(root):
        try:
            pages.append(dataset.load_annotation(root, site))
        except (dataset.CorpusError, schema.AnnotationValidationError) as exc:
            logger.warning("skipping %s: %s", site, exc)
    report = dataset.compute_stats(pages, merge_threshold=merge_threshold,
                                   excluded_sites=removed)
    dataset.atomic_write_text(root / "stats.json", report.to_json())
    click.echo(f"pages: {report.total_pages}")
    click.echo(f"needs_guides: {report.needs_guides_count} "
               f"({100 * report.needs_guides_ratio:.1f}%)")
    click.echo(f"avg guides (guide-bearing pages): {report.avg_guides_guide_bearing:.2f}")
    click.echo(f"avg guides (all pages): {report.avg_guides_all_pages:.2f}")
    click.echo(f"pages at cap ({schema.GUIDE_CAP} guides): {report.pages_at_cap}")
    for action_type, count in report.action_type_counts.items():
        click.echo(f"  {action_type}: {count}")


@cli.command("eval")
@click.option("--gold", "gold_root", type=click.Path(exists=True), required=True)
@click.option("--pred", "pred_root", type=click.Path(exists=True), required=True)
@click.option("--label", default="predictions", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Report file (default <pred>/eval_report.json).")
@click.pass_context
def eval_cmd(ctx: click.Context, gold_root: str, pred_root: str, label: str,
             out_path: str | None) -> None:
    """Score a prediction corpus against gold and print a results table."""
    try:
        gold_pages = list(dataset.load_corpus(gold_root).values())
        pred_pages = list(dataset.load_corpus(pred_root).values())
    except (dataset.CorpusError, schema.AnnotationValidationError) as exc:
        raise click.ClickException(f"unreadable corpus: {exc}") from exc
    report = evaluation.evaluate_pages(gold_pages, pred_pages)
    out = Path(out_path) if out_path else Path(pred_root) / "eval_report.json"
    dataset.atomic_write_text(out, report.to_json())
    click.echo(report.format_table(label))
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--bind", default=None, help="host:port (default 127.0.0.1:8050).")
@click.option("--ui-dir", "ui_dir", type=click.Path(), default=None,
              help="Directory of built frontend assets to mount at /ui.")
@click.pass_context
def serve(ctx: click.Context, bind: str | None, ui_dir: str | None) -> None:
    """Serve the human-review HTTP API over the corpus (loopback by default)."""
    root = _corpus_root(ctx.obj)
    bind = _setting(ctx.obj, "bind", bind, "127.0.0.1:8050")
    host, _, port = bind.partition(":")
    if ui_dir is None and Path("frontend/index.html").is_file():
        ui_dir = "frontend"
    review.serve(root, host=host or "127.0.0.1", port=int(port or 8050), ui_dir=ui_dir)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes: 0 ok, 1 failure, 2 usage."""
    try:
        result = cli.main(args=argv, standalone_mode=False, prog_name="guideweb")
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except dataset.CorpusError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return result if isinstance(result, int) else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
