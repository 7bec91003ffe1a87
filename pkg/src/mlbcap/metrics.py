"""Evaluation metrics: ROUGE-1/2/L (F1), corpus BLEU-4, quality histograms,
Kendall's tau-b, and Fleiss' kappa.

Tokenization everywhere is lowercased whitespace splitting with no stemming,
so every number here is reproducible from the raw strings alone. BLEU is
corpus-level with no smoothing.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import kernels
from .errors import Degenerate, EmptyInput, MissingRef, RangeError, ShapeError


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _prf(overlap: float, cand_total: float, ref_total: float) -> tuple[float, float, float]:
    precision = overlap / cand_total if cand_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def rouge_n(candidate: str, reference: str, n: int) -> tuple[float, float, float]:
    """Clipped n-gram overlap (precision, recall, F1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    overlap = sum((cand & ref).values())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    """Longest-common-subsequence overlap (precision, recall, F1)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = kernels.lcs_length(cand, ref)
    return _prf(lcs, len(cand), len(ref))


def bleu4(pairs: Sequence[tuple[str, str]]) -> float:
    """Corpus-level BLEU with 4-gram clipped precisions and brevity penalty.

    No smoothing: a zero modified precision at any order yields 0.
    """
    if not pairs:
        raise EmptyInput("bleu4 needs at least one pair")
    cand_len = 0
    ref_len = 0
    matches = [0] * 4
    totals = [0] * 4
    for candidate, reference in pairs:
        cand = tokenize(candidate)
        ref = tokenize(reference)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            cand_grams = _ngrams(cand, n)
            ref_grams = _ngrams(ref, n)
            matches[n - 1] += sum((cand_grams & ref_grams).values())
            totals[n - 1] += sum(cand_grams.values())
    if any(m == 0 or t == 0 for m, t in zip(matches, totals)):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / 4
    brevity = math.exp(1 - ref_len / cand_len) if cand_len < ref_len else 1.0
    return brevity * math.exp(log_precision)


@dataclass(frozen=True)
class QualityHistogram:
    counts: dict[int, int]
    total: int
    mean: float | None

    def percentages(self) -> dict[int, float]:
        if not self.total:
            return {score: 0.0 for score in range(1, 7)}
        return {score: 100.0 * count / self.total for score, count in self.counts.items()}

    def retention_rate(self, threshold: int) -> float:
        """Percentage of scores >= threshold."""
        if not self.total:
            return 0.0
        kept = sum(count for score, count in self.counts.items() if score >= threshold)
        return 100.0 * kept / self.total

    def as_dict(self) -> dict:
        return {
            "counts": {str(k): v for k, v in self.counts.items()},
            "total": self.total,
            "mean": self.mean,
            "percentages": {str(k): v for k, v in self.percentages().items()},
        }


def quality_distribution(scores: Iterable[int]) -> QualityHistogram:
    """Histogram of 1-6 scores with total and mean (mean absent when empty)."""
    counts = {score: 0 for score in range(1, 7)}
    total = 0
    acc = 0
    for score in scores:
        if not isinstance(score, int) or not 1 <= score <= 6:
            raise RangeError(f"score out of range: {score!r}")
        counts[score] += 1
        total += 1
        acc += score
    return QualityHistogram(counts=counts, total=total, mean=acc / total if total else None)


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected rank correlation (tau-b) in [-1, 1]."""
    if len(x) != len(y):
        raise ShapeError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise ShapeError("need at least two observations")
    concordant, discordant, tied_x, tied_y = kernels.rank_pair_counts(x, y)
    n0 = n * (n - 1) // 2
    denom = (n0 - tied_x) * (n0 - tied_y)
    if denom == 0:
        raise Degenerate("at least one variable is constant")
    return (concordant - discordant) / math.sqrt(denom)


def fleiss_kappa(table: Sequence[Sequence[int]]) -> float:
    """Chance-corrected multi-rater agreement over an items x categories table.

    Every row must sum to the same rater count r >= 2. A table with all mass
    in a single category has perfect observed agreement and returns 1.0.
    """
    if not table:
        raise ShapeError("empty table")
    n_items = len(table)
    n_categories = len(table[0])
    if any(len(row) != n_categories for row in table):
        raise ShapeError("ragged table")
    row_sums = [sum(row) for row in table]
    r = row_sums[0]
    if any(s != r for s in row_sums):
        raise ShapeError(f"unequal row sums: {sorted(set(row_sums))}")
    if r < 2:
        raise ShapeError("need at least two raters")

    p_bar = sum(
        (sum(c * c for c in row) - r) / (r * (r - 1)) for row in table
    ) / n_items
    marginals = [sum(row[j] for row in table) / (n_items * r) for j in range(n_categories)]
    p_e = sum(p * p for p in marginals)
    if p_e == 1.0:
        # all ratings in one category: observed agreement is perfect too
        return 1.0
    return (p_bar - p_e) / (1 - p_e)


@dataclass(frozen=True)
class MetricReport:
    rouge1_f: float
    rouge2_f: float
    rougeL_f: float
    bleu4: float
    n_pairs: int

    def as_dict(self) -> dict:
        return {
            "rouge1_f": self.rouge1_f,
            "rouge2_f": self.rouge2_f,
            "rougeL_f": self.rougeL_f,
            "bleu4": self.bleu4,
            "n_pairs": self.n_pairs,
        }


def _load_jsonl(path: str | Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def evaluate_pairs(pairs: Sequence[tuple[str, str]]) -> MetricReport:
    """Mean per-pair ROUGE F1s plus corpus BLEU-4 over (candidate, reference)."""
    if not pairs:
        raise EmptyInput("no pairs to evaluate")
    r1 = [rouge_n(c, r, 1)[2] for c, r in pairs]
    r2 = [rouge_n(c, r, 2)[2] for c, r in pairs]
    rl = [rouge_l(c, r)[2] for c, r in pairs]
    return MetricReport(
        rouge1_f=sum(r1) / len(pairs),
        rouge2_f=sum(r2) / len(pairs),
        rougeL_f=sum(rl) / len(pairs),
        bleu4=bleu4(pairs),
        n_pairs=len(pairs),
    )


def evaluate_run(
    results_path: str | Path,
    references_path: str | Path,
    breakdown_csv: str | Path | None = None,
) -> MetricReport:
    """Score improved captions from a pipeline run against reference captions.

    Every result figure must have a reference; a missing one is an error, not
    a silent skip. Optionally writes a per-pair breakdown CSV.
    """
    references = {
        row["figure_id"]: row["caption"] for row in _load_jsonl(references_path)
    }
    pairs: list[tuple[str, str, str]] = []
    for row in _load_jsonl(results_path):
        figure_id = row["figure_id"]
        if figure_id not in references:
            raise MissingRef(f"no reference caption for {figure_id}", figure_id=figure_id)
        pairs.append((figure_id, row["judgment"]["improved_caption"], references[figure_id]))
    report = evaluate_pairs([(c, r) for _, c, r in pairs])

    if breakdown_csv is not None:
        with open(breakdown_csv, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["figure_id", "rouge1_f", "rouge2_f", "rougeL_f"])
            for figure_id, cand, ref in pairs:
                writer.writerow(
                    [
                        figure_id,
                        f"{rouge_n(cand, ref, 1)[2]:.6f}",
                        f"{rouge_n(cand, ref, 2)[2]:.6f}",
                        f"{rouge_l(cand, ref)[2]:.6f}",
                    ]
                )
    return report


@dataclass(frozen=True)
class AgreementReport:
    fleiss_kappa: float | None
    kendall_tau: float | None
    n_items: int
    n_raters: int

    def as_dict(self) -> dict:
        return {
            "fleiss_kappa": self.fleiss_kappa,
            "kendall_tau": self.kendall_tau,
            "n_items": self.n_items,
            "n_raters": self.n_raters,
        }
