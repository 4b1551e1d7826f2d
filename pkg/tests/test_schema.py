from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guideweb import schema
from guideweb.schema import (
    AnnotationValidationError,
    GuideAnnotation,
    PageAnnotation,
    normalize_action_type,
    parse_and_validate,
    repair_raw_output,
    serialize,
    validate_page,
)

from conftest import make_annotation

VALID_PAGE = make_annotation(
    "shop.example", ["/html[1]/body[1]/a[1]", "//*[@id='q']"],
    action_types=["navigate", "search"], tags=["a", "input"],
)


def rules_of(exc: AnnotationValidationError) -> set[tuple[str, str]]:
    return {(v.path, v.rule) for v in exc.violations}


# -- strategies -------------------------------------------------------------

_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=30
).map(lambda s: s.strip() or "x")
_snake = st.from_regex(r"[a-z0-9]+(_[a-z0-9]+){0,2}", fullmatch=True)


@st.composite
def valid_pages(draw) -> PageAnnotation:
    n = draw(st.integers(min_value=0, max_value=5))
    xpaths = [f"/html[1]/body[1]/a[{i + 1}]" for i in range(n)]
    annotations = tuple(
        GuideAnnotation(
            intent=draw(_text),
            action_type=draw(_snake),
            guide_text=draw(_text),
            tag=draw(st.sampled_from(["a", "button", "input", "select"])),
            visible_text=draw(st.text(max_size=20)),
            xpath=xpath,
        )
        for xpath in xpaths
    )
    return PageAnnotation(
        site=draw(st.from_regex(r"[a-z][a-z0-9.-]{0,20}", fullmatch=True)),
        needs_guides=bool(annotations) or draw(st.booleans()),
        page_category=draw(_text),
        annotations=annotations,
    )


class TestSerialize:
    def test_minimal_page_has_empty_annotations_array(self):
        page = PageAnnotation("a.example", False, "article")
        text = serialize(page)
        assert '"annotations": []' in text
        assert text.endswith("\n")

    def test_guide_keys_in_schema_order(self):
        text = serialize(VALID_PAGE)
        first = json.loads(text)["annotations"][0]
        assert list(first) == ["intent", "action_type", "guide_text", "tag", "visible_text", "xpath"]
        assert list(json.loads(text)) == ["site", "html_file", "needs_guides", "page_category", "annotations"]

    def test_canonical_form_idempotent(self):
        text = serialize(VALID_PAGE)
        assert serialize(parse_and_validate(text)) == text

    def test_unicode_passthrough(self):
        page = make_annotation("ü.example", ["/html[1]/body[1]/a[1]"],
                               intents=["Suche öffnen — 検索"])
        text = serialize(page)
        assert "Suche öffnen — 検索" in text
        assert parse_and_validate(text) == page

    @settings(max_examples=200)
    @given(valid_pages())
    def test_round_trip_identity(self, page):
        assert parse_and_validate(serialize(page)) == page


class TestValidation:
    def test_valid_fixture_accepted(self):
        assert parse_and_validate(serialize(VALID_PAGE)) == VALID_PAGE

    def test_needs_guides_false_with_annotations(self):
        bad = make_annotation("a.example", ["/html[1]/body[1]/a[1]"], needs_guides=False)
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(serialize(bad))
        assert ("$.annotations", "needs-guides-consistency") in rules_of(exc.value)

    def test_guide_cap_exceeded(self):
        bad = make_annotation("a.example", [f"/html[1]/body[1]/a[{i}]" for i in range(1, 8)])
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(serialize(bad))
        assert ("$.annotations", "guide-cap") in rules_of(exc.value)
        assert any("guide cap exceeded" in v.message for v in exc.value.violations)

    def test_duplicate_xpath(self):
        bad = make_annotation("a.example", ["/html[1]/body[1]/a[1]", "/html[1]/body[1]/a[1]"])
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(serialize(bad))
        assert ("$.annotations[1].xpath", "duplicate-xpath") in rules_of(exc.value)

    @pytest.mark.parametrize("field", ["intent", "action_type", "guide_text", "tag", "xpath"])
    def test_empty_required_field(self, field):
        data = VALID_PAGE.to_dict()
        data["annotations"][0][field] = ""
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(json.dumps(data))
        assert (f"$.annotations[0].{field}", "empty-field") in rules_of(exc.value)

    def test_missing_field(self):
        data = VALID_PAGE.to_dict()
        del data["annotations"][0]["xpath"]
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(json.dumps(data))
        assert ("$.annotations[0].xpath", "missing-field") in rules_of(exc.value)

    def test_syntax_error(self):
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate("{not json")
        assert [v.rule for v in exc.value.violations] == ["syntax"]

    def test_action_type_must_be_snake_case(self):
        data = VALID_PAGE.to_dict()
        data["annotations"][0]["action_type"] = "Search Now"
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(json.dumps(data))
        assert ("$.annotations[0].action_type", "action-type-format") in rules_of(exc.value)

    def test_unknown_field_rejected(self):
        data = VALID_PAGE.to_dict()
        data["confidence"] = 0.9
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(json.dumps(data))
        assert ("$.confidence", "unknown-field") in rules_of(exc.value)

    def test_wrong_needs_guides_type(self):
        data = VALID_PAGE.to_dict()
        data["needs_guides"] = "yes"
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(json.dumps(data))
        assert ("$.needs_guides", "type") in rules_of(exc.value)

    def test_all_violations_reported_together(self):
        data = make_annotation(
            "a.example",
            ["/html[1]/body[1]/a[1]", "/html[1]/body[1]/a[1]"],
            needs_guides=False,
        ).to_dict()
        data["annotations"][0]["intent"] = ""
        with pytest.raises(AnnotationValidationError) as exc:
            parse_and_validate(json.dumps(data))
        rules = {rule for _, rule in rules_of(exc.value)}
        assert {"needs-guides-consistency", "duplicate-xpath", "empty-field"} <= rules

    def test_validate_page_empty_for_valid(self):
        assert validate_page(VALID_PAGE) == []


class TestNormalizeActionType:
    @pytest.mark.parametrize("raw,expected", [
        ("Search", "search"),
        ("contact support", "contact_support"),
        ("Filter/Sort", "filter_sort"),
        ("  checkout  ", "checkout"),
        ("start-trial", "start_trial"),
    ])
    def test_normalization(self, raw, expected):
        assert normalize_action_type(raw) == expected


class TestRepairRawOutput:
    def test_fence_and_marker_stripping(self):
        raw = '```json\n{"needs_guides": true, "page_category": "landing"}\n```</JSON>'
        assert repair_raw_output(raw, "</JSON>") == '{"needs_guides": true, "page_category": "landing"}'

    def test_prose_without_braces_unrecoverable(self):
        assert repair_raw_output("I cannot answer that.", "</JSON>") is None

    def test_trailing_chatter_stripped_by_brace_matching(self):
        raw = '{"a": {"b": 1}} and then some chatter } {"x": 2} </JSON> ignored'
        assert repair_raw_output(raw, "</JSON>") == '{"a": {"b": 1}}'

    def test_braces_inside_strings_ignored(self):
        raw = 'prefix {"note": "a } inside, and a { too", "n": 1} suffix'
        assert repair_raw_output(raw, "</JSON>") == '{"note": "a } inside, and a { too", "n": 1}'

    def test_escaped_quotes_inside_strings(self):
        raw = '{"note": "quote \\" then } brace", "n": 2} tail'
        candidate = repair_raw_output(raw, "</JSON>")
        assert json.loads(candidate) == {"note": 'quote " then } brace', "n": 2}

    def test_unbalanced_braces_fall_back_to_last_close(self):
        raw = 'text {"a": 1} more {"broken": '
        assert repair_raw_output(raw, "</JSON>") == '{"a": 1}'

    def test_marker_truncation_applies_first(self):
        raw = '{"a": 1}</JSON>{"b": 2}'
        assert repair_raw_output(raw, "</JSON>") == '{"a": 1}'

    def test_brace_matching_agrees_with_decoder_oracle(self):
        # Independent oracle: the stdlib JSON decoder scanning from the first
        # brace must accept exactly the candidate our scanner extracts.
        crafted = [
            'noise {"k": [1, 2, {"deep": "}"}], "s": "{{{"} trailing } }',
            '{"only": "object"}',
            'x{"a": "\\\\"}y',
            'say ```json\n{"f": {"g": {"h": 3}}}\n``` done',
        ]
        decoder = json.JSONDecoder()
        for raw in crafted:
            candidate = repair_raw_output(raw, "</JSON>")
            stripped = raw.replace("```json", "").replace("```", "")
            expected, end = decoder.raw_decode(stripped, stripped.index("{"))
            assert json.loads(candidate) == expected
