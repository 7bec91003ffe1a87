from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlbcap.corpus import (
    NO_PERIOD,
    SINGLE_SENTENCE,
    TOO_LONG,
    CorpusLoadError,
    FigureRecord,
    QualityScore,
    ScoredRecord,
    dedup_by_paper,
    filter_preprocess,
    filter_quality,
    load_corpus,
    select_fewshot,
    sentence_count,
    word_count,
)

from conftest import make_record


def scored(i, value, subject="cs.AI"):
    return ScoredRecord(make_record(i, subject=subject), QualityScore(value))


# --- load_corpus ---

def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    result = load_corpus(path)
    assert result.records == [] and result.errors == []


def test_load_three_lines_in_order(tmp_path):
    rows = [make_record(i).to_json() for i in range(3)]
    path = tmp_path / "c.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    result = load_corpus(path)
    assert [r.figure_id for r in result.records] == ["fig0", "fig1", "fig2"]
    assert not result.errors


def test_load_malformed_middle_line(tmp_path):
    rows = [json.dumps(make_record(0).to_json()), "{not json", json.dumps(make_record(2).to_json())]
    path = tmp_path / "c.jsonl"
    path.write_text("\n".join(rows) + "\n")
    result = load_corpus(path)
    assert [r.figure_id for r in result.records] == ["fig0", "fig2"]
    assert len(result.errors) == 1 and result.errors[0].line_number == 2


def test_load_strict_mode_fatal(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"figure_id": ""}\n')
    with pytest.raises(CorpusLoadError):
        load_corpus(path, strict=True)


def test_load_missing_file(tmp_path):
    with pytest.raises(CorpusLoadError):
        load_corpus(tmp_path / "nope.jsonl")


def test_load_fails_when_no_line_parses(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("{broken\n{also broken\n")
    with pytest.raises(CorpusLoadError):
        load_corpus(path)


def test_load_ignores_unknown_keys_and_null_image(tmp_path):
    row = make_record(0).to_json()
    row["image_ref"] = None
    row["extra_key"] = {"whatever": 1}
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(row) + "\n")
    record = load_corpus(path).records[0]
    assert record.image_ref is None


# --- dedup ---

def test_dedup_empty():
    assert dedup_by_paper([]) == []


def test_dedup_same_paper_different_figures_kept():
    a = make_record(0, paper_id="p1", figure_id="f1")
    b = make_record(1, paper_id="p1", figure_id="f2")
    assert dedup_by_paper([a, b]) == [a, b]


def test_dedup_identical_key_keeps_first():
    a = make_record(0, paper_id="p1", figure_id="f1", caption="First copy. Kept here.")
    b = make_record(1, paper_id="p1", figure_id="f1", caption="Second copy. Dropped.")
    assert dedup_by_paper([a, b]) == [a]


def test_dedup_idempotent_and_order_stable():
    records = [make_record(i % 3, paper_id="p", figure_id=f"f{i % 3}") for i in range(9)]
    once = dedup_by_paper(records)
    assert dedup_by_paper(once) == once
    assert [r.figure_id for r in once] == ["f0", "f1", "f2"]


# --- word / sentence counting ---

@pytest.mark.parametrize(
    "text,expected",
    [("", 0), ("a  b\tc", 3), ("one", 1), ("  leading and trailing  ", 3)],
)
def test_word_count(text, expected):
    assert word_count(text) == expected


def test_word_count_101_word_string():
    text = " ".join(f"w{i}" for i in range(101))
    assert word_count(text) == 101


@pytest.mark.parametrize(
    "text,expected",
    [
        ("One sentence.", 1),
        ("A. B. C.", 3),
        ("Fig 1 shows X", 1),
        ("", 0),
        ("   ", 0),
        ("Really?! Yes.", 2),
        ("Values 0.4 rise. Then drop.", 2),
    ],
)
def test_sentence_count(text, expected):
    assert sentence_count(text) == expected


@given(st.text(max_size=200))
def test_counts_total_on_arbitrary_text(text):
    assert word_count(text) >= 0
    assert sentence_count(text) >= 0


# --- filter_preprocess ---

def test_filter_keeps_two_sentence_caption():
    record = make_record(0, caption="Results improve. Error bars shown.")
    kept, rejected = filter_preprocess([record])
    assert kept == [record] and rejected == []


def test_filter_rejects_single_sentence():
    record = make_record(0, caption="Accuracy over epochs.")
    kept, rejected = filter_preprocess([record])
    assert kept == [] and rejected == [(record, SINGLE_SENTENCE)]


def test_filter_rejects_no_period():
    record = make_record(0, caption="Model architecture")
    _, rejected = filter_preprocess([record])
    assert rejected[0][1] == NO_PERIOD


def test_filter_rejects_101_words():
    caption = "First sentence. " + "word " * 98 + "end."
    assert word_count(caption) == 101
    record = make_record(0, caption=caption)
    _, rejected = filter_preprocess([record])
    assert rejected[0][1] == TOO_LONG


def test_filter_trailing_whitespace_trimmed():
    record = make_record(0, caption="Speedup over baseline. Dashed line marks parity.  ")
    kept, _ = filter_preprocess([record])
    assert kept == [record]


def test_filter_reason_precedence_no_period_first():
    # 150 words and no trailing period: NO_PERIOD wins
    record = make_record(0, caption="word " * 150)
    _, rejected = filter_preprocess([record])
    assert rejected[0][1] == NO_PERIOD


def test_filter_partitions_input_exactly():
    records = [make_record(i, caption=c) for i, c in enumerate(
        ["Good one. Fine.", "bad", "Single sentence only.", "Also good. Yes."]
    )]
    kept, rejected = filter_preprocess(records)
    assert len(kept) + len(rejected) == len(records)
    assert {r.figure_id for r in kept} | {r.figure_id for r, _ in rejected} == {
        r.figure_id for r in records
    }


def test_filter_idempotent_on_kept():
    records = [make_record(i, caption=c) for i, c in enumerate(
        ["Keep me. Sure.", "nope", "One sentence.", "Fine. Also fine. Third."]
    )]
    kept, _ = filter_preprocess(records)
    kept2, rejected2 = filter_preprocess(kept)
    assert kept2 == kept and rejected2 == []


@given(st.lists(st.text(max_size=80), max_size=20))
def test_filter_partition_property(captions):
    records = [
        FigureRecord(figure_id=f"f{i}", paper_id="p", caption=c)
        for i, c in enumerate(captions)
    ]
    kept, rejected = filter_preprocess(records)
    assert len(kept) + len(rejected) == len(records)
    rekept, rerejected = filter_preprocess(kept)
    assert rekept == kept and rerejected == []


# --- filter_quality ---

def test_filter_quality_threshold_five():
    pool = [scored(i, i + 1) for i in range(6)]  # scores 1..6
    result = filter_quality(pool, 5)
    assert [sr.score.value for sr in result] == [5, 6]


def test_filter_quality_threshold_one_is_identity():
    pool = [scored(i, 1 + i % 6) for i in range(10)]
    assert filter_quality(pool, 1) == pool


def test_filter_quality_table_distribution():
    counts = [157, 305, 102, 166, 1457, 813]
    pool = []
    i = 0
    for value, n in zip(range(1, 7), counts):
        for _ in range(n):
            pool.append(scored(i, value))
            i += 1
    kept = filter_quality(pool, 5)
    assert len(pool) == 3000
    assert len(kept) == 2270  # 1457 + 813


def test_filter_quality_monotone_in_threshold():
    pool = [scored(i, 1 + i % 6) for i in range(30)]
    ids = lambda rs: [sr.record.figure_id for sr in rs]
    for t1 in range(1, 6):
        assert set(ids(filter_quality(pool, t1 + 1))) <= set(ids(filter_quality(pool, t1)))


def test_filter_quality_bad_threshold():
    with pytest.raises(ValueError):
        filter_quality([], 0)


# --- select_fewshot ---

def test_fewshot_no_matches():
    pool = [scored(i, 6, subject="cs.CV") for i in range(5)]
    result = select_fewshot(pool, "cs.AI", 10, seed=7)
    assert len(result) == 0


def test_fewshot_reproducible_and_distinct():
    pool = [scored(i, 6, subject="cs.AI") for i in range(12)]
    first = select_fewshot(pool, "cs.AI", 10, seed=7)
    second = select_fewshot(pool, "cs.AI", 10, seed=7)
    assert first == second
    assert len(first) == 10
    assert len(set(first.source_figure_ids)) == 10


def test_fewshot_clamps_to_available():
    pool = [scored(i, 6, subject="cs.AI") for i in range(3)]
    result = select_fewshot(pool, "cs.AI", 10, seed=1)
    assert len(result) == 3


def test_fewshot_only_score_six():
    pool = [scored(0, 5, subject="cs.AI"), scored(1, 6, subject="cs.AI")]
    result = select_fewshot(pool, "cs.AI", 10, seed=1)
    assert result.source_figure_ids == ("fig1",)


def test_fewshot_invariant_under_pool_permutation():
    pool = [scored(i, 6, subject="cs.AI") for i in range(12)]
    shuffled = list(reversed(pool))
    assert select_fewshot(pool, "cs.AI", 5, seed=3) == select_fewshot(shuffled, "cs.AI", 5, seed=3)
