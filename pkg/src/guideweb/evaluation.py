"""Scoring of predicted page annotations against gold: target-selection
precision/recall/F1, sentence-level BLEU and ROUGE-L over matched pairs, and
per-field exact-match F1. All scores on a 0-100 scale, micro-aggregated."""
from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .schema import GuideAnnotation, PageAnnotation

logger = logging.getLogger(__name__)

EVAL_FIELDS = ("action_type", "tag", "visible_text", "xpath")

# Lowercase, split on any run of non-alphanumeric characters (unicode-aware).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_ID_QUOTE_RE = re.compile(r'^//\*\[@id="(.*)"\]$', re.DOTALL)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Sentence-level text metrics
# ---------------------------------------------------------------------------

def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypothesis: str, reference: str) -> float:
    """BLEU-4 with add-one smoothing on numerator and denominator for n >= 2
    and brevity penalty exp(min(0, 1 - ref_len/hyp_len)); 0-100 scale."""
    hyp = tokenize(hypothesis)
    ref = tokenize(reference)
    if not hyp:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        hyp_ngrams = _ngram_counts(hyp, n)
        ref_ngrams = _ngram_counts(ref, n)
        matched = sum(min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items())
        total = sum(hyp_ngrams.values())
        if n == 1:
            if matched == 0:
                return 0.0
            precision = matched / total
        else:
            precision = (matched + 1) / (total + 1)
        log_sum += math.log(precision)
    brevity = math.exp(min(0.0, 1.0 - len(ref) / len(hyp)))
    return 100.0 * brevity * math.exp(log_sum / 4)


def rouge_l(hypothesis: str, reference: str) -> float:
    """Word-level LCS F-measure with beta=1; 0-100 scale."""
    hyp = tokenize(hypothesis)
    ref = tokenize(reference)
    if not hyp or not ref:
        return 0.0
    lcs = _lcs_length(hyp, ref)
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return 100.0 * _f1(precision, recall)


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for token in a:
        row = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                row.append(prev[j - 1] + 1)
            else:
                row.append(max(prev[j], row[-1]))
        prev = row
    return prev[-1]


# ---------------------------------------------------------------------------
# Target matching and selection P/R/F1
# ---------------------------------------------------------------------------

def normalize_xpath(xpath: str) -> str:
    """Trim whitespace; collapse the double-quoted id form to single quotes."""
    xpath = xpath.strip()
    match = _ID_QUOTE_RE.match(xpath)
    if match:
        return f"//*[@id='{match.group(1)}']"
    return xpath


@dataclass
class TargetMatchResult:
    site: str
    matches: list[tuple[GuideAnnotation, GuideAnnotation]]
    unmatched_gold: list[GuideAnnotation]
    unmatched_pred: list[GuideAnnotation]

    @property
    def matched_count(self) -> int:
        return len(self.matches)

    @property
    def gold_count(self) -> int:
        return len(self.matches) + len(self.unmatched_gold)

    @property
    def pred_count(self) -> int:
        return len(self.matches) + len(self.unmatched_pred)


def match_targets(gold: PageAnnotation, pred: PageAnnotation) -> TargetMatchResult:
    """Pair annotations whose normalized xpaths are string-equal (one-to-one)."""
    if gold.site != pred.site:
        raise ValueError(f"site mismatch: {gold.site!r} vs {pred.site!r}")
    pred_by_xpath = {normalize_xpath(a.xpath): a for a in pred.annotations}
    matches: list[tuple[GuideAnnotation, GuideAnnotation]] = []
    unmatched_gold: list[GuideAnnotation] = []
    matched_keys: set[str] = set()
    for gold_ann in gold.annotations:
        key = normalize_xpath(gold_ann.xpath)
        if key in pred_by_xpath:
            matches.append((gold_ann, pred_by_xpath[key]))
            matched_keys.add(key)
        else:
            unmatched_gold.append(gold_ann)
    unmatched_pred = [
        a for a in pred.annotations if normalize_xpath(a.xpath) not in matched_keys
    ]
    return TargetMatchResult(gold.site, matches, unmatched_gold, unmatched_pred)


@dataclass(frozen=True)
class SelectionScores:
    precision: float
    recall: float
    f1: float
    matched_count: int
    predicted_count: int
    gold_count: int


def selection_prf(results: list[TargetMatchResult]) -> SelectionScores:
    """Micro-aggregated selection scores over per-page match results."""
    matched = sum(r.matched_count for r in results)
    predicted = sum(r.pred_count for r in results)
    gold = sum(r.gold_count for r in results)
    precision = 100.0 * matched / predicted if predicted else 0.0
    recall = 100.0 * matched / gold if gold else 0.0
    return SelectionScores(precision, recall, _f1(precision, recall), matched, predicted, gold)


# ---------------------------------------------------------------------------
# Text-generation and field scores
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TextScores:
    intent_bleu: float
    intent_rouge_l: float
    guide_bleu: float
    guide_rouge_l: float


def text_generation_scores(results: list[TargetMatchResult]) -> tuple[TextScores, list[str]]:
    """Means of sentence-level BLEU/ROUGE-L over matched pairs, for intent and
    guide_text separately. Zero matches yields zeros plus a warning."""
    pairs = [pair for r in results for pair in r.matches]
    if not pairs:
        warning = "no matched targets: text-generation scores are all zero"
        logger.warning(warning)
        return TextScores(0.0, 0.0, 0.0, 0.0), [warning]
    n = len(pairs)
    scores = TextScores(
        intent_bleu=sum(bleu(p.intent, g.intent) for g, p in pairs) / n,
        intent_rouge_l=sum(rouge_l(p.intent, g.intent) for g, p in pairs) / n,
        guide_bleu=sum(bleu(p.guide_text, g.guide_text) for g, p in pairs) / n,
        guide_rouge_l=sum(rouge_l(p.guide_text, g.guide_text) for g, p in pairs) / n,
    )
    return scores, []


@dataclass(frozen=True)
class FieldScores:
    precision: float
    recall: float
    f1: float


def field_exact_match_f1(
    gold_pages: list[PageAnnotation],
    pred_pages: list[PageAnnotation],
    field_name: str,
) -> FieldScores:
    """Per-page multiset intersection of one field's values (exact,
    case-sensitive, whitespace-trimmed), micro-aggregated."""
    if field_name not in EVAL_FIELDS:
        raise ValueError(f"unknown field {field_name!r}; expected one of {EVAL_FIELDS}")
    pred_by_site = {p.site: p for p in pred_pages}
    matched = predicted = gold_total = 0
    for gold_page in gold_pages:
        pred_page = pred_by_site.get(gold_page.site)
        gold_values = Counter(getattr(a, field_name).strip() for a in gold_page.annotations)
        pred_values = Counter(
            getattr(a, field_name).strip()
            for a in (pred_page.annotations if pred_page else ())
        )
        matched += sum((gold_values & pred_values).values())
        predicted += sum(pred_values.values())
        gold_total += sum(gold_values.values())
    gold_sites = {g.site for g in gold_pages}
    for pred_page in pred_pages:  # predictions for sites without gold entries
        if pred_page.site not in gold_sites:
            predicted += len(pred_page.annotations)
    precision = 100.0 * matched / predicted if predicted else 0.0
    recall = 100.0 * matched / gold_total if gold_total else 0.0
    return FieldScores(precision, recall, _f1(precision, recall))


# ---------------------------------------------------------------------------
# Corpus-level report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    selection: SelectionScores
    text: TextScores
    field_f1: dict[str, FieldScores]
    pages_evaluated: int
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pages_evaluated": self.pages_evaluated,
            "selection": {
                "precision": round(self.selection.precision, 4),
                "recall": round(self.selection.recall, 4),
                "f1": round(self.selection.f1, 4),
                "matched_count": self.selection.matched_count,
                "predicted_count": self.selection.predicted_count,
                "gold_count": self.selection.gold_count,
            },
            "text": {
                "intent_bleu": round(self.text.intent_bleu, 4),
                "intent_rouge_l": round(self.text.intent_rouge_l, 4),
                "guide_bleu": round(self.text.guide_bleu, 4),
                "guide_rouge_l": round(self.text.guide_rouge_l, 4),
            },
            "field_f1": {
                name: {
                    "precision": round(scores.precision, 4),
                    "recall": round(scores.recall, 4),
                    "f1": round(scores.f1, 4),
                }
                for name, scores in self.field_f1.items()
            },
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def format_table(self, label: str = "predictions") -> str:
        """Fixed-width selection + text-quality table (report column order:
        P, R, F1, Match/Pred., then intent/guide BLEU and ROUGE-L)."""
        headers = [
            "Model", "P", "R", "F1", "Match/Pred.",
            "Intent BLEU", "Intent ROUGE-L", "Guide BLEU", "Guide ROUGE-L",
        ]
        sel = self.selection
        row = [
            label,
            f"{sel.precision:.2f}", f"{sel.recall:.2f}", f"{sel.f1:.2f}",
            f"{sel.matched_count}/{sel.predicted_count}",
            f"{self.text.intent_bleu:.2f}", f"{self.text.intent_rouge_l:.2f}",
            f"{self.text.guide_bleu:.2f}", f"{self.text.guide_rouge_l:.2f}",
        ]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*headers), fmt.format(*["-" * w for w in widths]), fmt.format(*row)]
        field_fmt = "{:<14} {:>8} {:>8} {:>8}"
        lines.append("")
        lines.append(field_fmt.format("Field", "P", "R", "F1"))
        for name in EVAL_FIELDS:
            scores = self.field_f1[name]
            lines.append(field_fmt.format(
                name, f"{scores.precision:.2f}", f"{scores.recall:.2f}", f"{scores.f1:.2f}",
            ))
        return "\n".join(lines) + "\n"


def evaluate_corpus(gold_root, pred_root) -> EvalReport:
    """Score one on-disk corpus against another (spec'd corpus layout)."""
    from . import dataset

    gold_pages = list(dataset.load_corpus(gold_root).values())
    pred_pages = list(dataset.load_corpus(pred_root).values())
    return evaluate_pages(gold_pages, pred_pages)


def evaluate_pages(
    gold_pages: list[PageAnnotation],
    pred_pages: list[PageAnnotation],
) -> EvalReport:
    """Score in-memory corpora; sites absent from pred count as empty
    predictions (and vice versa for safety)."""
    pred_by_site = {p.site: p for p in pred_pages}
    gold_by_site = {g.site: g for g in gold_pages}
    sites = sorted(set(gold_by_site) | set(pred_by_site))

    results: list[TargetMatchResult] = []
    for site in sites:
        gold = gold_by_site.get(site) or PageAnnotation(site, False, "unknown")
        pred = pred_by_site.get(site) or PageAnnotation(site, False, "unknown")
        results.append(match_targets(gold, pred))

    selection = selection_prf(results)
    text, warnings = text_generation_scores(results)
    field_f1 = {
        name: field_exact_match_f1(gold_pages, pred_pages, name)
        for name in EVAL_FIELDS
    }
    return EvalReport(
        selection=selection,
        text=text,
        field_f1=field_f1,
        pages_evaluated=len(sites),
        warnings=warnings,
    )
