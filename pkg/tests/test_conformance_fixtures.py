"""The frontend shares fixture files with this package (frontend/tests/fixtures);
these tests pin the Python side to the same files so the two implementations
cannot drift apart silently."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from guideweb import dom
from guideweb.schema import AnnotationValidationError, parse_and_validate

FRONTEND_FIXTURES = Path(__file__).parent.parent / "frontend" / "tests" / "fixtures"

pytestmark = pytest.mark.skipif(
    not FRONTEND_FIXTURES.is_dir(), reason="frontend fixtures not present"
)


def test_xpath_conformance_fixture_matches_implementation():
    data = json.loads((FRONTEND_FIXTURES / "xpath_conformance.json").read_text())
    assert len(data["pages"]) >= 4
    for page in data["pages"]:
        tree = dom.parse_html(page["html"])
        index = dom.extract_interactive_elements(tree)
        got = [
            {"xpath": e.xpath, "tag": e.tag, "visible_text": e.visible_text}
            for e in index.elements
        ]
        assert got == page["elements"], page["name"]
        for element in page["elements"]:
            node = dom.resolve_xpath(tree, element["xpath"])
            assert node is not None
            assert node.tag == element["tag"]


def test_schema_conformance_fixture_matches_implementation():
    data = json.loads((FRONTEND_FIXTURES / "schema_conformance.json").read_text())
    assert len(data["cases"]) >= 10
    for case in data["cases"]:
        text = json.dumps(case["record"])
        if case["rules"]:
            with pytest.raises(AnnotationValidationError) as exc:
                parse_and_validate(text)
            assert sorted({v.rule for v in exc.value.violations}) == case["rules"]
        else:
            parse_and_validate(text)
