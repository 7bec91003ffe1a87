"""Command-line entry point.

Exit codes: 0 success, 1 batch completed with per-figure failures, 2 fatal
config or I/O error. `run` is byte-for-byte the composition of `ingest`,
`assess`, `generate`, and `judge` under the same config and seed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import pipeline
from .cache import CompletionCache
from .config import ConfigError, RunConfig, load_config
from .corpus import (
    CorpusLoadError,
    FigureRecord,
    QualityScore,
    ScoredRecord,
    dedup_by_paper,
    filter_preprocess,
    load_corpus,
)
from .errors import MlbcapError
from .metrics import evaluate_run, quality_distribution

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2


def _fatal(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_FATAL)


def _load_run_config(config_path: str, track: str | None, seed: int | None) -> RunConfig:
    try:
        config = load_config(config_path, track_override=track)
    except ConfigError as exc:
        _fatal(str(exc))
    if seed is not None:
        config.seed = seed
    return config


def _artifacts(out: str) -> Path:
    path = Path(out) / "artifacts"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_jsonl(path: Path) -> list[dict]:
    if not path.is_file():
        _fatal(f"missing artifact {path}; run the previous stage first")
    return [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def _records_from_rows(rows: list[dict]) -> list[FigureRecord]:
    return [
        FigureRecord(
            figure_id=row["figure_id"],
            paper_id=row["paper_id"],
            subject=row.get("subject", ""),
            figure_type=row.get("figure_type", ""),
            caption=row.get("caption", ""),
            paragraphs=tuple(row.get("paragraphs", [])),
            mentions=tuple(row.get("mentions", [])),
            ocr_text=row.get("ocr_text", ""),
            image_ref=row.get("image_ref"),
        )
        for row in rows
    ]


def _context(config: RunConfig) -> pipeline.CallContext:
    return pipeline.CallContext(
        cache=CompletionCache(config.cache_dir), permit_count=config.permits
    )


def _report_outcomes(outcomes: list[pipeline.FigureOutcome], stage_label: str) -> int:
    failures = [o for o in outcomes if o.error is not None]
    for outcome in failures:
        click.echo(
            f"{stage_label} failed for {outcome.figure_id} at {outcome.stage}: {outcome.error}",
            err=True,
        )
    return EXIT_PARTIAL if failures else EXIT_OK


@click.group()
def main():
    """Multi-LLM figure captioning pipeline."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(), help="Corpus JSONL file.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--strict", is_flag=True, help="Any malformed corpus line is fatal.")
def ingest(corpus, out, strict):
    """Load, deduplicate, and filter the corpus; write kept/rejected files."""
    try:
        loaded = load_corpus(corpus, strict=strict)
    except CorpusLoadError as exc:
        _fatal(str(exc))
    for error in loaded.errors:
        click.echo(f"ingest: line {error.line_number}: {error.message}", err=True)
    deduped = dedup_by_paper(loaded.records)
    kept, rejected = filter_preprocess(deduped)
    artifacts = _artifacts(out)
    _write_jsonl(artifacts / "kept.jsonl", [r.to_json() for r in kept])
    _write_jsonl(
        artifacts / "rejected.jsonl",
        [{"figure_id": r.figure_id, "reason": reason} for r, reason in rejected],
    )
    click.echo(
        f"ingest: {len(loaded.records)} loaded, {len(deduped)} after dedup, "
        f"{len(kept)} kept, {len(rejected)} rejected"
    )
    sys.exit(EXIT_PARTIAL if loaded.errors else EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--threshold", type=int, default=None, help="Quality threshold override.")
def assess(config_path, out, threshold):
    """Score kept captions 1-6 and build the high-quality subset."""
    config = _load_run_config(config_path, None, None)
    if threshold is not None:
        config.threshold = threshold
    artifacts = _artifacts(out)
    records = _records_from_rows(_read_jsonl(artifacts / "kept.jsonl"))
    ctx = _context(config)
    scored, failures = pipeline.assess_quality(records, config.rater, ctx, config.token_limit)
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
    dhigh = pipeline.build_dhigh(scored)
    _write_jsonl(
        artifacts / "dhigh.jsonl",
        [{"figure_id": sr.record.figure_id, "rating": sr.score.value} for sr in dhigh],
    )
    for figure_id, error in failures:
        click.echo(f"assess failed for {figure_id}: {error}", err=True)
    click.echo(f"assess: {len(scored)} scored, {len(dhigh)} in high-quality subset")
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


def _load_stage_inputs(artifacts: Path) -> tuple[list[FigureRecord], list[ScoredRecord]]:
    records = _records_from_rows(_read_jsonl(artifacts / "kept.jsonl"))
    by_id = {record.figure_id: record for record in records}
    scored = [
        ScoredRecord(by_id[row["figure_id"]], QualityScore(row["rating"], row.get("rater", "")))
        for row in _read_jsonl(artifacts / "scores.jsonl")
        if row["figure_id"] in by_id
    ]
    return records, scored


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Sampling seed override.")
def generate(config_path, out, seed):
    """Produce figure descriptions and the four candidate captions."""
    config = _load_run_config(config_path, None, seed)
    artifacts = _artifacts(out)
    records, scored = _load_stage_inputs(artifacts)
    dhigh = pipeline.build_dhigh(scored)
    outcomes = pipeline.generate_stage(records, dhigh, config, _context(config))
    _write_jsonl(
        artifacts / "generation.jsonl",
        [o.generation for o in outcomes if o.generation is not None],
    )
    click.echo(f"generate: {sum(1 for o in outcomes if o.generation)} of {len(records)} figures")
    sys.exit(_report_outcomes(outcomes, "generate"))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--track", type=click.Choice(["long", "short"]), default=None)
@click.option("--judge-image", type=click.Choice(["on", "off"]), default=None)
def judge(config_path, out, track, judge_image):
    """Select best/worst candidates and post-edit the winning caption."""
    config = _load_run_config(config_path, track, None)
    if judge_image is not None:
        config.judge_image = judge_image == "on"
    artifacts = _artifacts(out)
    records = _records_from_rows(_read_jsonl(artifacts / "kept.jsonl"))
    generation_rows = _read_jsonl(artifacts / "generation.jsonl")
    outcomes = pipeline.judge_stage(records, generation_rows, config, _context(config))
    _write_jsonl(
        artifacts / "results.jsonl", [o.result for o in outcomes if o.result is not None]
    )
    click.echo(
        f"judge: {sum(1 for o in outcomes if o.result)} of {len(generation_rows)} figures"
    )
    sys.exit(_report_outcomes(outcomes, "judge"))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--corpus", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--track", type=click.Choice(["long", "short"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--judge-image", type=click.Choice(["on", "off"]), default=None)
@click.option("--strict", is_flag=True)
def run(config_path, corpus, out, track, seed, judge_image, strict):
    """End-to-end pipeline: ingest, assess, generate, judge."""
    config = _load_run_config(config_path, track, seed)
    if judge_image is not None:
        config.judge_image = judge_image == "on"
    try:
        manifest = pipeline.run_pipeline(corpus, config, out, strict=strict)
    except (CorpusLoadError, OSError) as exc:
        _fatal(str(exc))
    for figure_id in manifest.failed_figures:
        info = manifest.figures[figure_id]
        click.echo(f"run failed for {figure_id} at {info['stage']}: {info['error']}", err=True)
    click.echo(
        f"run {manifest.run_id}: {manifest.counts['captioned']} captioned, "
        f"{manifest.counts['failed']} failed, cache {manifest.cache}"
    )
    sys.exit(EXIT_PARTIAL if manifest.failed_figures or manifest.load_errors else EXIT_OK)


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--references", required=True, type=click.Path(), help="References JSONL.")
def evaluate(out, references):
    """Score improved captions against reference captions (ROUGE, BLEU)."""
    artifacts = _artifacts(out)
    try:
        report = evaluate_run(
            artifacts / "results.jsonl",
            references,
            breakdown_csv=Path(out) / "metric_pairs.csv",
        )
    except (MlbcapError, OSError, KeyError) as exc:
        _fatal(str(exc))
    (Path(out) / "metric_report.json").write_text(
        json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8"
    )
    click.echo(
        f"rouge1 {report.rouge1_f:.4f}  rouge2 {report.rouge2_f:.4f}  "
        f"rougeL {report.rougeL_f:.4f}  bleu4 {report.bleu4:.4f}  pairs {report.n_pairs}"
    )
    sys.exit(EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["best_worst", "rank"]), default="best_worst")
@click.option("--seed", type=int, default=None, help="Shuffle seed override.")
def agree(config_path, out, mode, seed):
    """Compute inter-judge agreement from stored annotation responses."""
    from .evalserve import AnnotationService, AnnotationStore, create_tasks

    config = _load_run_config(config_path, None, seed)
    artifacts = _artifacts(out)
    results_path = artifacts / "results.jsonl"
    if not results_path.is_file():
        _fatal(f"missing {results_path}; run the pipeline first")
    tasks = create_tasks(results_path, mode, config.seed, track=config.track)
    store = AnnotationStore(Path(out) / "responses.jsonl")
    service = AnnotationService(tasks, store)
    try:
        rows, report = service.export_agreement()
    except MlbcapError as exc:
        _fatal(str(exc))
    payload = {"responses": rows, "report": report.as_dict()}
    (Path(out) / "agreement.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(json.dumps(report.as_dict()))
    sys.exit(EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--corpus", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["best_worst", "rank"]), default="best_worst")
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--seed", type=int, default=None, help="Shuffle seed override.")
@click.option("--ui-dir", type=click.Path(), default=None, help="Static UI bundle to host.")
def serve(config_path, corpus, out, mode, port, host, seed, ui_dir):
    """Start the annotation service (plus static review UI when available)."""
    import uvicorn

    from .evalserve import AnnotationService, AnnotationStore, build_app, create_tasks

    config = _load_run_config(config_path, None, seed)
    try:
        loaded = load_corpus(corpus)
    except CorpusLoadError as exc:
        _fatal(str(exc))
    image_refs = {r.figure_id: r.image_ref for r in loaded.records if r.image_ref}
    artifacts = _artifacts(out)
    results_path = artifacts / "results.jsonl"
    if not results_path.is_file():
        _fatal(f"missing {results_path}; run the pipeline first")
    tasks = create_tasks(
        results_path, mode, config.seed, track=config.track, image_refs=image_refs
    )
    if not tasks:
        _fatal("no annotatable figures in results.jsonl")
    store = AnnotationStore(Path(out) / "responses.jsonl")
    service = AnnotationService(tasks, store)
    static_dir = None
    if ui_dir and Path(ui_dir).is_dir():
        static_dir = ui_dir
    else:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if bundled.is_dir():
            static_dir = bundled
    app = build_app(service, static_dir=static_dir)
    click.echo(f"serving {len(tasks)} tasks on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--out", required=True, type=click.Path())
def report(out):
    """Human-readable run summary, including best-caption source shares."""
    artifacts = _artifacts(out)
    results = _read_jsonl(artifacts / "results.jsonl")
    if not results:
        _fatal("results.jsonl is empty")
    good_counts = {label: 0 for label in ("A", "B", "C", "D")}
    ok_count = 0
    for row in results:
        good_counts[row["judgment"]["good"]] += 1
        ok_count += bool(row["judgment"]["word_count_ok"])
    total = len(results)
    click.echo(f"figures captioned: {total}")
    click.echo(f"within word limit: {ok_count} ({100.0 * ok_count / total:.2f}%)")
    click.echo("best caption source shares:")
    for label in ("A", "B", "C", "D"):
        click.echo(f"  {label}: {100.0 * good_counts[label] / total:.2f}%")
    histogram_path = artifacts / "quality_histogram.json"
    if histogram_path.is_file():
        histogram = json.loads(histogram_path.read_text(encoding="utf-8"))
        click.echo(f"quality histogram: {histogram['counts']} (mean {histogram['mean']})")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
