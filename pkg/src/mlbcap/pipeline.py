"""Pipeline orchestration: quality assessment, figure description, four-way
candidate generation, judgment with post-editing, and end-to-end runs.

Every backend call goes through a CallContext that applies the completion
cache and per-backend concurrency permits. With mock backends the whole run
is a pure function of (corpus, config), which the determinism tests rely on.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path
from typing import Callable, Mapping

from .backends import BackendConfig, complete, extract_json_object
from .cache import CacheStats, CompletionCache, completion_key
from .config import RunConfig
from .corpus import (
    FewShotSet,
    FigureRecord,
    QualityScore,
    ScoredRecord,
    dedup_by_paper,
    filter_preprocess,
    filter_quality,
    load_corpus,
    select_fewshot,
    word_count,
)
from .errors import (
    CandidatesIncomplete,
    EmptyInput,
    ImageRequired,
    JudgeConflict,
    JudgeLabel,
    JudgeParse,
    MlbcapError,
    ParseInvalid,
    ParseNoObject,
)
from .metrics import quality_distribution
from .prompts import (
    CANDIDATE_LABELS,
    Track,
    render_caption_prompt,
    render_description_large,
    render_description_simple,
    render_judgement,
    render_quality_assessment,
    render_summarize,
)

logger = logging.getLogger(__name__)

DHIGH_THRESHOLD = 5
JUDGE_KEYS = ("Good", "Bad", "Improved Caption")
_REASK_REMINDER = (
    "Reminder: the Improved Caption MUST be {max_len} words or less. "
    "Answer again with the same JSON keys and a compliant Improved Caption."
)


@dataclass(frozen=True)
class FigureDescription:
    text: str
    backend_id: str


@dataclass(frozen=True)
class CandidateCaption:
    label: str
    text: str
    backend_id: str

    def __post_init__(self):
        if self.label not in CANDIDATE_LABELS:
            raise ValueError(f"label must be one of {CANDIDATE_LABELS}")
        if not self.text:
            raise ValueError("candidate text must be nonempty")


@dataclass(frozen=True)
class CandidateSet:
    figure_id: str
    candidates: tuple[CandidateCaption, ...]

    def __post_init__(self):
        labels = sorted(c.label for c in self.candidates)
        if labels != list(CANDIDATE_LABELS):
            raise ValueError(f"need exactly one candidate per label, got {labels}")

    def text_by_label(self) -> dict[str, str]:
        return {c.label: c.text for c in sorted(self.candidates, key=lambda c: c.label)}


@dataclass(frozen=True)
class JudgmentResult:
    figure_id: str
    good: str
    bad: str
    improved_caption: str
    track: Track
    word_count_ok: bool
    raw_reply: str

    def __post_init__(self):
        if self.good == self.bad:
            raise ValueError("good and bad labels must differ")


@dataclass
class CallContext:
    """Caching + concurrency wrapper around backend completions."""

    cache: CompletionCache | None = None
    permit_count: int = 4
    sleep: Callable[[float], None] = time.sleep
    stage_stats: dict[str, CacheStats] = field(default_factory=dict)
    _permits: dict[str, threading.Semaphore] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _stats(self, stage: str) -> CacheStats:
        with self._lock:
            return self.stage_stats.setdefault(stage, CacheStats())

    def _permit(self, backend_id: str) -> threading.Semaphore:
        with self._lock:
            if backend_id not in self._permits:
                self._permits[backend_id] = threading.Semaphore(self.permit_count)
            return self._permits[backend_id]

    def call(self, stage: str, config: BackendConfig, prompt) -> str:
        stats = self._stats(stage)
        key = None
        if self.cache is not None:
            key = completion_key(
                stage, config.backend_id, config.model_name, prompt.text, prompt.image_ref
            )
            cached = self.cache.get(key)
            if cached is not None:
                with self._lock:
                    stats.hits += 1
                return cached
        with self._permit(config.backend_id):
            result = complete(config, prompt, sleep=self.sleep)
        if self.cache is not None and key is not None:
            self.cache.put(key, result.text)
        with self._lock:
            stats.misses += 1
        return result.text


def _require_int(value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"rating is not numeric: {value!r}")
    return int(value)


def assess_quality(
    records: list[FigureRecord],
    rater: BackendConfig,
    ctx: CallContext | None = None,
    token_limit: int = 512,
) -> tuple[list[ScoredRecord], list[tuple[str, MlbcapError]]]:
    """Rate every caption 1-6 with the rater backend.

    Out-of-range ratings clamp with a warning; per-record failures are
    collected rather than aborting the batch.
    """
    ctx = ctx or CallContext()
    scored: list[ScoredRecord] = []
    failures: list[tuple[str, MlbcapError]] = []
    for record in records:
        try:
            prompt = render_quality_assessment(record, token_limit)
            reply = ctx.call("assess", rater, prompt)
            obj, _span = extract_json_object(reply)
            rating = _require_int(obj.get("rating")) if isinstance(obj, dict) else None
            if rating is None:
                raise ParseInvalid("reply object has no numeric 'rating'")
        except MlbcapError as exc:
            failures.append((record.figure_id, exc))
            continue
        except ValueError as exc:
            failures.append((record.figure_id, ParseInvalid(str(exc))))
            continue
        if not 1 <= rating <= 6:
            logger.warning(
                "rating %s out of range for %s, clamping", rating, record.figure_id
            )
            rating = min(6, max(1, rating))
        scored.append(
            ScoredRecord(record, QualityScore(value=rating, rater=rater.backend_id))
        )
    return scored, failures


def build_dhigh(scored: list[ScoredRecord]) -> list[ScoredRecord]:
    """High-quality subset: scores 5 and 6."""
    return filter_quality(scored, DHIGH_THRESHOLD)


def describe_figure(
    record: FigureRecord,
    describer: BackendConfig,
    style: str = "simple",
    ctx: CallContext | None = None,
) -> FigureDescription:
    """Produce the figure description feeding caption generation and judgment.

    "large" asks for a JSON reply and extracts the description key; "simple"
    takes the whole reply text.
    """
    if style not in ("large", "simple"):
        raise ValueError(f"unknown describer style {style!r}")
    if not record.image_ref:
        raise ImageRequired("description needs the figure image", figure_id=record.figure_id)
    ctx = ctx or CallContext()
    if style == "large":
        prompt = render_description_large(
            record.figure_type, record.subject, image_ref=record.image_ref
        )
        reply = ctx.call("describe", describer, prompt)
        obj, _span = extract_json_object(reply)
        text = obj.get("description") if isinstance(obj, dict) else None
        if not isinstance(text, str) or not text:
            raise ParseInvalid("reply object has no 'description' string")
    else:
        prompt = render_description_simple(image_ref=record.image_ref)
        text = ctx.call("describe", describer, prompt).strip()
    return FigureDescription(text=text, backend_id=describer.backend_id)


def _caption_from_reply(reply: str) -> str:
    obj, _span = extract_json_object(reply)
    text = obj.get("caption") if isinstance(obj, dict) else None
    if not isinstance(text, str) or not text:
        raise ParseInvalid("reply object has no 'caption' string")
    return text


def generate_candidates(
    record: FigureRecord,
    description: str,
    fewshot: FewShotSet | None,
    roles: Mapping[str, BackendConfig],
    ctx: CallContext | None = None,
    token_limit: int = 512,
) -> CandidateSet:
    """Produce the four labeled candidates, one per role, concurrently.

    Role A summarizes paragraphs+OCR and replies in plain text; B and C get
    the caption prompt without few-shot examples; D gets them. Any role
    failing makes the whole figure fail with CANDIDATES_INCOMPLETE.
    """
    missing = [label for label in CANDIDATE_LABELS if label not in roles]
    if missing:
        raise CandidatesIncomplete("roles not configured", labels=missing)
    ctx = ctx or CallContext()

    def _one(label: str) -> CandidateCaption:
        config = roles[label]
        if label == "A":
            prompt = render_summarize(record, token_limit)
            text = ctx.call("generate", config, prompt).strip()
        else:
            prompt = render_caption_prompt(
                record,
                description,
                fewshot if label == "D" else None,
                token_limit,
            )
            text = _caption_from_reply(ctx.call("generate", config, prompt))
        return CandidateCaption(label=label, text=text, backend_id=config.backend_id)

    with ThreadPoolExecutor(max_workers=len(CANDIDATE_LABELS)) as pool:
        futures = {label: pool.submit(_one, label) for label in CANDIDATE_LABELS}
        candidates = []
        first_error: tuple[str, Exception] | None = None
        for label in CANDIDATE_LABELS:
            try:
                candidates.append(futures[label].result())
            except Exception as exc:
                if first_error is None:
                    first_error = (label, exc)
    if first_error is not None:
        label, exc = first_error
        raise CandidatesIncomplete(
            f"role {label} failed: {exc}", figure_id=record.figure_id, label=label
        ) from exc
    return CandidateSet(figure_id=record.figure_id, candidates=tuple(candidates))


def _parse_judgement(reply: str) -> tuple[str, str, str]:
    try:
        obj, _span = extract_json_object(reply)
    except (ParseNoObject, ParseInvalid) as exc:
        raise JudgeParse(f"judgement reply unparsable: {exc}") from exc
    if not isinstance(obj, dict):
        raise JudgeParse("judgement reply is not a JSON object")
    missing = [key for key in JUDGE_KEYS if not isinstance(obj.get(key), str)]
    if missing:
        raise JudgeParse(f"judgement reply missing keys: {missing}")
    good, bad, improved = (obj[key] for key in JUDGE_KEYS)
    for label in (good, bad):
        if label not in CANDIDATE_LABELS:
            raise JudgeLabel(f"label {label!r} outside A-D")
    if good == bad:
        raise JudgeConflict(f"good and bad both {good!r}")
    return good, bad, improved


def judge(
    candidate_set: CandidateSet,
    description: str,
    record: FigureRecord,
    judge_backend: BackendConfig,
    track: Track,
    ctx: CallContext | None = None,
    judge_image: bool = False,
    token_limit: int = 512,
) -> JudgmentResult:
    """Select best/worst candidates and post-edit the winner.

    When the improved caption exceeds the track's word cap, exactly one
    corrective re-ask with a stricter reminder is made; the final reply is
    recorded as-is, never truncated.
    """
    ctx = ctx or CallContext()
    image_ref = record.image_ref if judge_image else None
    prompt = render_judgement(
        candidate_set,
        description,
        record.paragraphs,
        record.mentions,
        track,
        image_ref=image_ref,
        token_limit=token_limit,
    )
    reply = ctx.call("judge", judge_backend, prompt)
    good, bad, improved = _parse_judgement(reply)
    if word_count(improved) > track.max_len_words:
        reminder = _REASK_REMINDER.format(max_len=track.max_len_words)
        retry_prompt = type(prompt)(
            text=f"{prompt.text}\n\n{reminder}",
            template_id=prompt.template_id,
            image_ref=prompt.image_ref,
            placeholder_fill=prompt.placeholder_fill,
        )
        reply = ctx.call("judge", judge_backend, retry_prompt)
        good, bad, improved = _parse_judgement(reply)
    return JudgmentResult(
        figure_id=candidate_set.figure_id,
        good=good,
        bad=bad,
        improved_caption=improved,
        track=track,
        word_count_ok=word_count(improved) <= track.max_len_words,
        raw_reply=reply,
    )


def best_source_share(judgments: list[JudgmentResult]) -> dict[str, float]:
    """Percentage of judgments whose winning label is each role; sums to 100."""
    if not judgments:
        raise EmptyInput("no judgments")
    counts = {label: 0 for label in CANDIDATE_LABELS}
    for result in judgments:
        counts[result.good] += 1
    return {label: 100.0 * count / len(judgments) for label, count in counts.items()}


def figure_seed(seed: int, figure_id: str) -> int:
    """Stable per-figure sampling seed derived from the run seed."""
    return int.from_bytes(
        sha256(f"{seed}:{figure_id}".encode("utf-8")).digest()[:8], "big"
    )


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    track: str
    counts: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)
    load_errors: list = field(default_factory=list)
    assess_failures: dict = field(default_factory=dict)
    duration_s: float = 0.0

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_digest": self.config_digest,
            "track": self.track,
            "counts": self.counts,
            "cache": self.cache,
            "figures": self.figures,
            "load_errors": self.load_errors,
            "assess_failures": self.assess_failures,
            "duration_s": self.duration_s,
        }

    @property
    def failed_figures(self) -> list[str]:
        return [fid for fid, info in self.figures.items() if info["status"] == "FAILED"]


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


@dataclass
class FigureOutcome:
    """Terminal state of one figure's captioning path."""

    figure_id: str
    generation: dict | None = None  # {figure_id, description, candidates}
    result: dict | None = None  # full results.jsonl row
    stage: str | None = None  # failure stage when error is set
    error: MlbcapError | None = None


def _generate_one(
    record: FigureRecord,
    dhigh: list[ScoredRecord],
    config: RunConfig,
    ctx: CallContext,
) -> FigureOutcome:
    try:
        description = describe_figure(record, config.describer, config.describer_style, ctx)
    except MlbcapError as exc:
        return FigureOutcome(record.figure_id, stage="describe", error=exc)
    fewshot = select_fewshot(
        dhigh,
        record.subject,
        config.fewshot_k,
        figure_seed(config.seed, record.figure_id),
    )
    try:
        candidate_set = generate_candidates(
            record, description.text, fewshot, config.roles, ctx, config.token_limit
        )
    except MlbcapError as exc:
        return FigureOutcome(record.figure_id, stage="generate", error=exc)
    return FigureOutcome(
        record.figure_id,
        generation={
            "figure_id": record.figure_id,
            "description": description.text,
            "candidates": candidate_set.text_by_label(),
        },
    )


def _judge_one(
    record: FigureRecord,
    generation: dict,
    config: RunConfig,
    ctx: CallContext,
) -> FigureOutcome:
    candidate_set = CandidateSet(
        figure_id=record.figure_id,
        candidates=tuple(
            CandidateCaption(
                label=label,
                text=generation["candidates"][label],
                backend_id=config.roles[label].backend_id,
            )
            for label in CANDIDATE_LABELS
        ),
    )
    try:
        judgment = judge(
            candidate_set,
            generation["description"],
            record,
            config.judge,
            config.track,
            ctx,
            judge_image=config.judge_image,
            token_limit=config.token_limit,
        )
    except MlbcapError as exc:
        return FigureOutcome(record.figure_id, generation=generation, stage="judge", error=exc)
    return FigureOutcome(
        record.figure_id,
        generation=generation,
        result={
            **generation,
            "judgment": {
                "good": judgment.good,
                "bad": judgment.bad,
                "improved_caption": judgment.improved_caption,
                "word_count_ok": judgment.word_count_ok,
            },
        },
    )


def _caption_figure(
    record: FigureRecord,
    dhigh: list[ScoredRecord],
    config: RunConfig,
    ctx: CallContext,
) -> FigureOutcome:
    outcome = _generate_one(record, dhigh, config, ctx)
    if outcome.error is not None:
        return outcome
    return _judge_one(record, outcome.generation, config, ctx)


def _map_figures(records, worker, workers: int) -> list[FigureOutcome]:
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(worker, record) for record in records]
        return [future.result() for future in futures]


def generate_stage(
    records: list[FigureRecord],
    dhigh: list[ScoredRecord],
    config: RunConfig,
    ctx: CallContext,
) -> list[FigureOutcome]:
    """Describe + four-way candidate generation for every record."""
    return _map_figures(
        records, lambda r: _generate_one(r, dhigh, config, ctx), config.workers
    )


def judge_stage(
    records: list[FigureRecord],
    generation_rows: list[dict],
    config: RunConfig,
    ctx: CallContext,
) -> list[FigureOutcome]:
    """Judgment over previously generated candidates."""
    by_id = {record.figure_id: record for record in records}
    jobs = [
        (by_id[row["figure_id"]], row)
        for row in generation_rows
        if row["figure_id"] in by_id
    ]
    return _map_figures(
        jobs, lambda job: _judge_one(job[0], job[1], config, ctx), config.workers
    )


def run_pipeline(
    corpus_path: str | Path,
    config: RunConfig,
    out_dir: str | Path,
    strict: bool = False,
    ctx: CallContext | None = None,
) -> RunManifest:
    """End-to-end run: ingest, assess, describe, generate, judge.

    Deterministic result files (kept/rejected/scores/dhigh/results) land in
    out_dir/artifacts; the manifest (timing, cache stats) is written beside
    them as out_dir/manifest.json so artifact trees stay byte-comparable
    across runs.
    """
    started = time.perf_counter()
    out = Path(out_dir)
    artifacts = out / "artifacts"
    artifacts.mkdir(parents=True, exist_ok=True)
    if ctx is None:
        ctx = CallContext(cache=CompletionCache(config.cache_dir), permit_count=config.permits)

    loaded = load_corpus(corpus_path, strict=strict)
    deduped = dedup_by_paper(loaded.records)
    kept, rejected = filter_preprocess(deduped)
    _write_jsonl(artifacts / "kept.jsonl", [r.to_json() for r in kept])
    _write_jsonl(
        artifacts / "rejected.jsonl",
        [{"figure_id": r.figure_id, "reason": reason} for r, reason in rejected],
    )

    scored, assess_failures = assess_quality(kept, config.rater, ctx, config.token_limit)
    _write_jsonl(
        artifacts / "scores.jsonl",
        [
            {"figure_id": sr.record.figure_id, "rating": sr.score.value, "rater": sr.score.rater}
            for sr in scored
        ],
    )
    histogram = quality_distribution([sr.score.value for sr in scored])
    (artifacts / "quality_histogram.json").write_text(
        json.dumps(histogram.as_dict(), indent=2) + "\n", encoding="utf-8"
    )
    dhigh = build_dhigh(scored)
    _write_jsonl(
        artifacts / "dhigh.jsonl",
        [
            {"figure_id": sr.record.figure_id, "rating": sr.score.value}
            for sr in dhigh
        ],
    )

    manifest = RunManifest(
        run_id=f"{time.strftime('%Y%m%d-%H%M%S')}-{config.digest[:8]}",
        config_digest=config.digest,
        track=config.track.kind.value,
    )
    manifest.load_errors = [
        {"line": e.line_number, "message": e.message} for e in loaded.errors
    ]
    manifest.assess_failures = {fid: str(exc) for fid, exc in assess_failures}
    for record, reason in rejected:
        manifest.figures[record.figure_id] = {
            "status": "DONE",
            "disposition": "filtered",
            "reason": reason,
        }

    outcomes = _map_figures(
        kept, lambda r: _caption_figure(r, dhigh, config, ctx), config.workers
    )
    for outcome in outcomes:
        if outcome.error is None:
            manifest.figures[outcome.figure_id] = {
                "status": "DONE",
                "disposition": "captioned",
            }
        else:
            manifest.figures[outcome.figure_id] = {
                "status": "FAILED",
                "stage": outcome.stage,
                "error": str(outcome.error),
            }
            logger.warning(
                "figure %s failed at %s: %s", outcome.figure_id, outcome.stage, outcome.error
            )

    _write_jsonl(
        artifacts / "generation.jsonl",
        [o.generation for o in outcomes if o.generation is not None],
    )
    _write_jsonl(
        artifacts / "results.jsonl",
        [o.result for o in outcomes if o.result is not None],
    )

    manifest.counts = {
        "loaded": len(loaded.records),
        "deduped": len(deduped),
        "kept": len(kept),
        "rejected": len(rejected),
        "scored": len(scored),
        "dhigh": len(dhigh),
        "captioned": sum(1 for o in outcomes if o.result is not None),
        "failed": len(manifest.failed_figures),
    }
    manifest.cache = {stage: stats.as_dict() for stage, stats in sorted(ctx.stage_stats.items())}
    manifest.duration_s = time.perf_counter() - started
    (out / "manifest.json").write_text(
        json.dumps(manifest.as_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return manifest
