from __future__ import annotations

import json
from pathlib import Path

import pytest

from mlbcap.corpus import FigureRecord

# 1x1 transparent PNG; fixture images append a distinct trailer byte so each
# figure has unique content (the cache keys on image bytes).
PNG_BYTES = bytes.fromhex(
    "89504e470d0a1a0a0000000d4948445200000001000000010802000000907753de"
    "0000000c49444154789c626001000000ffff03000006000557bfabd4"
    "0000000049454e44ae426082"
)

CONFIG_TEMPLATE = """\
seed: 7
track: long
threshold: 5
fewshot_k: 10
token_limit: 512
workers: {workers}
permits: 4
judge_image: false
describer_style: simple
cache_dir: {cache_dir}
backends:
  rater: {{kind: mock, backend_id: rater-mock, model_name: mock-vision, supports_images: true, seed: 11}}
  describer: {{kind: mock, backend_id: desc-mock, model_name: mock-vision, supports_images: true, seed: 12}}
  judge: {{kind: mock, backend_id: judge-mock, model_name: mock-text, seed: 13}}
  roles:
    A: {{kind: mock, backend_id: role-a, model_name: mock-text, seed: 1}}
    B: {{kind: mock, backend_id: role-b, model_name: mock-text, seed: 2}}
    C: {{kind: mock, backend_id: role-c, model_name: mock-text, seed: 3}}
    D: {{kind: mock, backend_id: role-d, model_name: mock-text, seed: 4}}
"""


def make_record(i: int = 0, image_ref: str | None = None, **overrides) -> FigureRecord:
    fields = dict(
        figure_id=f"fig{i}",
        paper_id=f"2101.{i:05d}",
        subject="cs.CL" if i % 2 else "cs.AI",
        figure_type="bar chart",
        caption=f"Accuracy improves with depth. Error bars denote std over {i + 2} runs.",
        paragraphs=(f"As shown in Fig. {i}, accuracy improves.", "We ablate model depth."),
        mentions=(f"As shown in Fig. {i}, accuracy improves.",),
        ocr_text="acc 0.9 depth 4",
        image_ref=image_ref,
    )
    fields.update(overrides)
    return FigureRecord(**fields)


def write_corpus(path: Path, records: list[FigureRecord]) -> Path:
    path.write_text(
        "".join(json.dumps(r.to_json()) + "\n" for r in records), encoding="utf-8"
    )
    return path


def write_images(directory: Path, n: int) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    refs = []
    for i in range(n):
        path = directory / f"fig{i}.png"
        path.write_bytes(PNG_BYTES + bytes([i]))
        refs.append(str(path))
    return refs


@pytest.fixture
def five_figure_corpus(tmp_path):
    """Corpus JSONL with five figures and distinct on-disk images."""
    refs = write_images(tmp_path / "img", 5)
    records = [make_record(i, image_ref=refs[i]) for i in range(5)]
    return write_corpus(tmp_path / "corpus.jsonl", records), records


@pytest.fixture
def make_config(tmp_path):
    """Factory writing a mock-backend config; cache defaults inside tmp_path."""

    def _make(cache_dir: Path | None = None, workers: int = 4, **extra) -> Path:
        cache = Path(cache_dir) if cache_dir else tmp_path / "cache"
        text = CONFIG_TEMPLATE.format(cache_dir=json.dumps(str(cache)), workers=workers)
        for key, value in extra.items():
            text += f"{key}: {json.dumps(value)}\n"
        path = tmp_path / f"config-{len(list(tmp_path.glob('config-*.yaml')))}.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    return _make
