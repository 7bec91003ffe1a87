"""Corpus data model, JSONL ingestion, and preprocessing filters.

A corpus is a UTF-8 JSONL file, one figure record per line. Records carry
the author caption plus every piece of paper-derived context used downstream:
figure-mentioning paragraphs, explicit mention sentences, OCR text, figure
type, and the arXiv subject category.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

# Rejection reason codes, in precedence order (first matching wins).
NO_PERIOD = "NO_PERIOD"
TOO_LONG = "TOO_LONG"
SINGLE_SENTENCE = "SINGLE_SENTENCE"

MAX_CAPTION_WORDS = 100
_TERMINATORS = frozenset(".?!")


@dataclass(frozen=True)
class FigureRecord:
    """One figure with all of its paper-derived context."""

    figure_id: str
    paper_id: str
    subject: str = ""
    figure_type: str = ""
    caption: str = ""
    paragraphs: tuple[str, ...] = ()
    mentions: tuple[str, ...] = ()
    ocr_text: str = ""
    image_ref: str | None = None

    def __post_init__(self):
        if not self.figure_id:
            raise ValueError("figure_id must be nonempty")

    def to_json(self) -> dict:
        return {
            "figure_id": self.figure_id,
            "paper_id": self.paper_id,
            "subject": self.subject,
            "figure_type": self.figure_type,
            "caption": self.caption,
            "paragraphs": list(self.paragraphs),
            "mentions": list(self.mentions),
            "ocr_text": self.ocr_text,
            "image_ref": self.image_ref,
        }


@dataclass(frozen=True)
class QualityScore:
    """A 1-6 usefulness rating assigned by a rater backend."""

    value: int
    rater: str = ""

    def __post_init__(self):
        if not 1 <= self.value <= 6:
            raise ValueError(f"quality score must be in [1, 6], got {self.value}")


@dataclass(frozen=True)
class ScoredRecord:
    record: FigureRecord
    score: QualityScore


@dataclass(frozen=True)
class FewShotSet:
    """Same-subject, top-scored example captions for few-shot prompting."""

    examples: tuple[tuple[str, str], ...]  # (caption, subject)
    seed: int
    source_figure_ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.examples)


@dataclass
class LoadError:
    line_number: int
    message: str


@dataclass
class LoadResult:
    records: list[FigureRecord]
    errors: list[LoadError] = field(default_factory=list)


class CorpusLoadError(Exception):
    pass


def _parse_line(obj) -> FigureRecord:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    figure_id = obj.get("figure_id")
    paper_id = obj.get("paper_id")
    caption = obj.get("caption")
    if not isinstance(figure_id, str) or not figure_id:
        raise ValueError("figure_id missing or empty")
    if not isinstance(paper_id, str) or not paper_id:
        raise ValueError("paper_id missing or empty")
    if not isinstance(caption, str):
        raise ValueError("caption missing")

    def _str_list(key) -> tuple[str, ...]:
        value = obj.get(key, [])
        if not isinstance(value, list) or any(not isinstance(x, str) for x in value):
            raise ValueError(f"{key} must be an array of strings")
        # Source data is noisy; drop empty entries rather than reject the line.
        return tuple(x for x in value if x)

    image_ref = obj.get("image_ref")
    if image_ref is not None and not isinstance(image_ref, str):
        raise ValueError("image_ref must be a string or null")

    return FigureRecord(
        figure_id=figure_id,
        paper_id=paper_id,
        subject=str(obj.get("subject", "") or ""),
        figure_type=str(obj.get("figure_type", "") or ""),
        caption=caption,
        paragraphs=_str_list("paragraphs"),
        mentions=_str_list("mentions"),
        ocr_text=str(obj.get("ocr_text", "") or ""),
        image_ref=image_ref or None,
    )


def load_corpus(path: str | Path, strict: bool = False) -> LoadResult:
    """Read a JSONL corpus, preserving file order.

    Malformed lines are collected with their line number; in strict mode the
    first malformed line aborts the load. An unreadable file always raises.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusLoadError(f"cannot read corpus {path}: {exc}") from exc

    result = LoadResult(records=[])
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            result.records.append(_parse_line(json.loads(line)))
        except (json.JSONDecodeError, ValueError) as exc:
            if strict:
                raise CorpusLoadError(f"line {line_number}: {exc}") from exc
            result.errors.append(LoadError(line_number, str(exc)))
    if result.errors and not result.records:
        raise CorpusLoadError(f"no line of {path} parsed ({len(result.errors)} malformed)")
    return result


def dedup_by_paper(records: Iterable[FigureRecord]) -> list[FigureRecord]:
    """Keep the first occurrence of each (paper_id, figure_id) pair.

    The key is figure-level rather than paper-level: one paper legitimately
    contributes many figures, and only cross-dataset duplicates of the same
    figure should collapse.
    """
    seen: set[tuple[str, str]] = set()
    kept = []
    for record in records:
        key = (record.paper_id, record.figure_id)
        if key in seen:
            continue
        seen.add(key)
        kept.append(record)
    return kept


def word_count(text: str) -> int:
    """Number of maximal nonempty runs of non-whitespace characters."""
    return len(text.split())


def sentence_count(text: str) -> int:
    """Count sentence terminators (. ? !) followed by whitespace or end of text.

    Text with no terminator but at least one word counts as one sentence.
    """
    count = 0
    for i, ch in enumerate(text):
        if ch in _TERMINATORS and (i + 1 == len(text) or text[i + 1].isspace()):
            count += 1
    if count == 0 and word_count(text) > 0:
        return 1
    return count


def caption_reject_reason(caption: str) -> str | None:
    """First matching rejection reason, or None if the caption passes."""
    trimmed = caption.rstrip()
    if not trimmed.endswith("."):
        return NO_PERIOD
    if word_count(caption) > MAX_CAPTION_WORDS:
        return TOO_LONG
    if sentence_count(caption) <= 1:
        return SINGLE_SENTENCE
    return None


def filter_preprocess(
    records: Iterable[FigureRecord],
) -> tuple[list[FigureRecord], list[tuple[FigureRecord, str]]]:
    """Partition records into (kept, rejected) per the caption quality rules.

    Rejects captions that do not end with a period, exceed 100 words, or
    consist of a single sentence. Each rejection carries a reason code; the
    two lists always partition the input exactly.
    """
    kept: list[FigureRecord] = []
    rejected: list[tuple[FigureRecord, str]] = []
    for record in records:
        reason = caption_reject_reason(record.caption)
        if reason is None:
            kept.append(record)
        else:
            rejected.append((record, reason))
    return kept, rejected


def filter_quality(scored: Iterable[ScoredRecord], threshold: int) -> list[ScoredRecord]:
    """Keep records whose score is >= threshold, order preserved.

    Threshold 5 yields the high-quality subset used for few-shot pools and
    fine-tuning data.
    """
    if not 1 <= threshold <= 6:
        raise ValueError(f"threshold must be in [1, 6], got {threshold}")
    return [sr for sr in scored if sr.score.value >= threshold]


def select_fewshot(
    pool: Iterable[ScoredRecord], subject: str, k: int, seed: int
) -> FewShotSet:
    """Sample up to k distinct score-6, same-subject example captions.

    Matches are sorted by figure_id before seeded sampling so the result is
    invariant under permutation of the pool. Returns fewer than k when the
    pool is small.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    matches = sorted(
        (sr for sr in pool if sr.score.value == 6 and sr.record.subject == subject),
        key=lambda sr: sr.record.figure_id,
    )
    n = min(k, len(matches))
    chosen = random.Random(seed).sample(matches, n) if n else []
    return FewShotSet(
        examples=tuple((sr.record.caption, sr.record.subject) for sr in chosen),
        seed=seed,
        source_figure_ids=tuple(sr.record.figure_id for sr in chosen),
    )
