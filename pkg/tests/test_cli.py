from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from guideweb import dataset
from guideweb.cli import main

from conftest import FIXTURES, fixture_html, make_annotation, write_corpus


@pytest.fixture
def gold_corpus(tmp_path):
    pages = {
        f"site{i}.example": (
            fixture_html("nav_page"),
            make_annotation(
                f"site{i}.example",
                ["/html[1]/body[1]/header[1]/nav[1]/a[1]", "//*[@id='email']"],
                tags=["a", "input"],
            ),
        )
        for i in range(3)
    }
    return write_corpus(tmp_path / "gold", pages)


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 2

    def test_missing_required_option_is_usage_error(self):
        assert main(["eval"]) == 2

    def test_missing_corpus_flag(self):
        assert main(["stats"]) == 2

    def test_nonexistent_corpus_is_operational_failure(self):
        assert main(["--corpus", "/no/such/dir", "stats"]) == 1


class TestEvalCommand:
    def test_self_eval_prints_all_100_row(self, gold_corpus, capsys):
        code = main(["eval", "--gold", str(gold_corpus), "--pred", str(gold_corpus)])
        out = capsys.readouterr().out
        assert code == 0
        assert "100.00" in out
        assert "6/6" in out  # Match/Pred fraction
        report = json.loads((gold_corpus / "eval_report.json").read_text())
        assert report["selection"]["f1"] == 100.0

    def test_report_written_to_custom_path(self, gold_corpus, tmp_path, capsys):
        out_file = tmp_path / "report.json"
        code = main(["eval", "--gold", str(gold_corpus), "--pred", str(gold_corpus),
                     "--out", str(out_file)])
        assert code == 0
        assert json.loads(out_file.read_text())["selection"]["precision"] == 100.0

    def test_unreadable_corpus_fails(self, gold_corpus, tmp_path):
        bad = tmp_path / "bad"
        (bad / "x.example").mkdir(parents=True)
        (bad / "x.example" / "annotations.json").write_text("{broken")
        (bad / "x.example" / "page.html").write_text("<body></body>")
        assert main(["eval", "--gold", str(gold_corpus), "--pred", str(bad)]) == 1


class TestValidateCommand:
    def test_valid_corpus_passes(self, gold_corpus, capsys):
        assert main(["--corpus", str(gold_corpus), "validate"]) == 0
        assert "OK" in capsys.readouterr().out

    def test_invalid_file_lists_path_and_fails(self, gold_corpus, capsys):
        data = make_annotation("site0.example", []).to_dict()
        data["needs_guides"] = False
        data["annotations"] = [{
            "intent": "", "action_type": "navigate", "guide_text": "g",
            "tag": "a", "visible_text": "", "xpath": "/html[1]/body[1]/a[1]",
        }]
        (gold_corpus / "site0.example" / "annotations.json").write_text(json.dumps(data))
        code = main(["--corpus", str(gold_corpus), "validate"])
        out = capsys.readouterr().out
        assert code == 1
        assert "$.annotations[0].intent" in out
        report = json.loads((gold_corpus / "validation_report.json").read_text())
        assert report["valid"] is False

    def test_dangling_xpath_reported(self, gold_corpus, capsys):
        page = make_annotation("site1.example", ["/html[1]/body[1]/video[7]"], tags=["video"])
        dataset.save_annotation(gold_corpus, page)
        code = main(["--corpus", str(gold_corpus), "validate"])
        assert code == 1
        assert "xpath-unresolvable" in capsys.readouterr().out


class TestSplitCommand:
    def make_site_dirs(self, root: Path, n: int) -> None:
        for i in range(n):
            site = f"site{i:04d}.example"
            write_corpus(root, {site: (b"<body></body>",
                                       make_annotation(site, [], needs_guides=False))})

    def test_996_sites_747_249(self, tmp_path, capsys):
        root = tmp_path / "big"
        self.make_site_dirs(root, 996)
        code = main(["--corpus", str(root), "split", "--seed", "13", "--ratio", "0.75"])
        out = capsys.readouterr().out
        assert code == 0
        assert "747 train / 249 test" in out
        manifest = dataset.SplitManifest.from_json((root / "splits.json").read_text())
        assert len(manifest.train_sites) == 747
        assert len(manifest.test_sites) == 249

    def test_idempotent_rerun_same_bytes(self, gold_corpus):
        assert main(["--corpus", str(gold_corpus), "split"]) == 0
        first = (gold_corpus / "splits.json").read_bytes()
        assert main(["--corpus", str(gold_corpus), "split"]) == 0
        assert (gold_corpus / "splits.json").read_bytes() == first

    def test_removed_sites_excluded(self, gold_corpus):
        from guideweb.review import ReviewStore

        ReviewStore(gold_corpus).set_status("site2.example", "removed", "broken")
        assert main(["--corpus", str(gold_corpus), "split"]) == 0
        manifest = dataset.SplitManifest.from_json((gold_corpus / "splits.json").read_text())
        assert "site2.example" not in manifest.train_sites + manifest.test_sites


class TestIndexAndShorten:
    def test_index_writes_jsonl(self, gold_corpus, capsys):
        assert main(["--corpus", str(gold_corpus), "index"]) == 0
        lines = (gold_corpus / "element_index.jsonl").read_text().splitlines()
        assert len(lines) == 3
        record = json.loads(lines[0])
        assert record["site"] == "site0.example"
        assert len(record["elements"]) == 7

    def test_index_idempotent(self, gold_corpus):
        assert main(["--corpus", str(gold_corpus), "index"]) == 0
        first = (gold_corpus / "element_index.jsonl").read_bytes()
        assert main(["--corpus", str(gold_corpus), "index"]) == 0
        assert (gold_corpus / "element_index.jsonl").read_bytes() == first

    def test_shorten_writes_budget_report(self, gold_corpus):
        assert main(["--corpus", str(gold_corpus), "shorten"]) == 0
        record = json.loads((gold_corpus / "shortened.jsonl").read_text().splitlines()[0])
        assert record["interactive_kept"] == 7
        assert "[INTERACTIVE_ELEMENTS]" in record["prompt"]


class TestFilterCommand:
    def test_filter_writes_outputs(self, gold_corpus):
        assert main(["--corpus", str(gold_corpus), "filter"]) == 0
        kept = json.loads((gold_corpus / "filtered_samples.json").read_text())
        assert len(kept["kept_sites"]) == 3
        assert (gold_corpus / "dropped_samples.jsonl").exists()


class TestStatsCommand:
    def test_stats_output(self, gold_corpus, capsys):
        assert main(["--corpus", str(gold_corpus), "stats"]) == 0
        out = capsys.readouterr().out
        assert "pages: 3" in out
        report = json.loads((gold_corpus / "stats.json").read_text())
        assert report["total_pages"] == 3
        assert report["needs_guides_count"] == 3


class TestAnnotateCommand:
    def test_annotate_with_transcripts(self, tmp_path, capsys):
        root = tmp_path / "corpus"
        (root / "nav_page").mkdir(parents=True)
        (root / "nav_page" / "page.html").write_bytes(fixture_html("nav_page"))
        code = main([
            "--corpus", str(root), "annotate",
            "--transcripts", str(FIXTURES / "golden" / "nav_page_transcripts.json"),
        ])
        assert code == 0
        golden = (FIXTURES / "golden" / "nav_page_annotations.json").read_text()
        assert (root / "nav_page" / "annotations.json").read_text() == golden
        log = (root / "annotation_log.jsonl").read_text()
        assert json.loads(log.splitlines()[0])["status"] == "ok"

    def test_annotate_skips_existing(self, gold_corpus, capsys):
        code = main(["--corpus", str(gold_corpus), "annotate",
                     "--transcripts", str(FIXTURES / "golden" / "nav_page_transcripts.json")])
        assert code == 0
        assert "0 annotated" in capsys.readouterr().out

    def test_missing_api_base_is_usage_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv("GUIDEWEB_API_BASE", raising=False)
        root = tmp_path / "corpus"
        (root / "x.example").mkdir(parents=True)
        (root / "x.example" / "page.html").write_bytes(b"<body></body>")
        assert main(["--corpus", str(root), "annotate"]) == 2


class _SeedHandler(BaseHTTPRequestHandler):
    def do_GET(self):  # noqa: N802
        body = fixture_html("nav_page")
        self.send_response(200)
        self.send_header("Content-Type", "text/html")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class TestCrawlCommand:
    def test_crawl_from_seed_list(self, tmp_path, capsys):
        server = ThreadingHTTPServer(("127.0.0.1", 0), _SeedHandler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            host = f"127.0.0.1:{server.server_address[1]}"
            seeds = tmp_path / "seeds.csv"
            seeds.write_text(f"1,{host}\n")
            root = tmp_path / "corpus"
            code = main(["--corpus", str(root), "crawl", "--seeds", str(seeds),
                         "--scheme", "http"])
            assert code == 0
            assert "kept 1" in capsys.readouterr().out
            assert (root / "127.0.0.1" / "page.html").read_bytes() == fixture_html("nav_page")
            log = json.loads((root / "crawl_log.jsonl").read_text())
            assert log["viewport"] == {"width": 1280, "height": 720}
        finally:
            server.shutdown()


class TestConfigPrecedence:
    def test_config_file_supplies_corpus(self, gold_corpus, tmp_path):
        cfg = tmp_path / "guideweb.yaml"
        cfg.write_text(f"corpus: {gold_corpus}\nseed: 99\n")
        assert main(["--config", str(cfg), "split"]) == 0
        manifest = dataset.SplitManifest.from_json((gold_corpus / "splits.json").read_text())
        assert manifest.seed == 99

    def test_flag_beats_config(self, gold_corpus, tmp_path):
        cfg = tmp_path / "guideweb.yaml"
        cfg.write_text(f"corpus: {gold_corpus}\nseed: 99\n")
        assert main(["--config", str(cfg), "split", "--seed", "13"]) == 0
        manifest = dataset.SplitManifest.from_json((gold_corpus / "splits.json").read_text())
        assert manifest.seed == 13

    def test_unknown_config_key_rejected(self, gold_corpus, tmp_path):
        cfg = tmp_path / "guideweb.yaml"
        cfg.write_text("zorp: 1\n")
        assert main(["--config", str(cfg), "--corpus", str(gold_corpus), "stats"]) == 2
