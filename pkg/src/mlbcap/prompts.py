"""Prompt rendering with bit-exact templates.

Templates live as text files under ``mlbcap/templates/`` with placeholders
in literal bracket syntax ([Paragraphs], [Caption], ...). Rendering is a
single-pass substitution, so placeholder-like text inside substituted values
is never re-expanded. The [Figure] marker denotes the attached image: it is
removed from the text and carried as ``image_ref`` on the rendered prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

from .corpus import FewShotSet, FigureRecord
from .errors import CandidatesIncomplete, ImageRequired

DEFAULT_TOKEN_LIMIT = 512
LONG_MAX_WORDS = 50
SHORT_MAX_WORDS = 30

CANDIDATE_LABELS = ("A", "B", "C", "D")

_FEWSHOT_BLOCK = "### Best Caption Examples\n\n[Few-shot Examples]\n\n"
_PLACEHOLDER_RE = re.compile(
    r"\[(Figure|Paragraphs|Caption|Figure Type|Subject|Few-shot Examples|"
    r"Mentions|OCR|Figure Description|Max Len|Caption A|Caption B|Caption C|"
    r"Caption D)\]"
)


class TemplateId(str, Enum):
    QUALITY_ASSESSMENT = "quality_assessment"
    DESCRIPTION_LARGE = "description_large"
    DESCRIPTION_SIMPLE = "description_simple"
    CAPTION_FEWSHOT = "caption_fewshot"
    CAPTION_PLAIN = "caption_plain"
    JUDGEMENT = "judgement"
    SUMMARIZE = "summarize"

    @property
    def requires_image(self) -> bool:
        return self in (
            TemplateId.QUALITY_ASSESSMENT,
            TemplateId.DESCRIPTION_LARGE,
            TemplateId.DESCRIPTION_SIMPLE,
        )


class TrackKind(str, Enum):
    LONG = "long"
    SHORT = "short"


@dataclass(frozen=True)
class Track:
    """Caption-length track; the word cap feeds the judgment prompt."""

    kind: TrackKind
    max_len_words: int = 0

    def __post_init__(self):
        if self.max_len_words == 0:
            default = LONG_MAX_WORDS if self.kind == TrackKind.LONG else SHORT_MAX_WORDS
            object.__setattr__(self, "max_len_words", default)
        if self.max_len_words <= 0:
            raise ValueError("max_len_words must be > 0")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    template_id: TemplateId
    image_ref: str | None = None
    placeholder_fill: Mapping[str, str] = field(default_factory=dict)


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    path = resources.files("mlbcap").joinpath(f"templates/{name}.txt")
    return path.read_text(encoding="utf-8").removesuffix("\n")


def _render(
    template_name: str,
    template_id: TemplateId,
    fills: dict[str, str],
    image_ref: str | None = None,
    skeleton: str | None = None,
) -> RenderedPrompt:
    text = skeleton if skeleton is not None else _template(template_name)
    fills = dict(fills)
    fills["Figure"] = ""
    text = _PLACEHOLDER_RE.sub(lambda m: fills.get(m.group(1), ""), text)
    text = text.lstrip("\n")
    audit = dict(fills)
    audit["Figure"] = image_ref or ""
    return RenderedPrompt(
        text=text,
        template_id=template_id,
        image_ref=image_ref,
        placeholder_fill=audit,
    )


def concat_and_truncate_paragraphs(
    paragraphs: Iterable[str], limit_tokens: int = DEFAULT_TOKEN_LIMIT
) -> str:
    """Join paragraphs with newlines, capped at limit_tokens whitespace tokens.

    When the cap bites, the first limit_tokens tokens are re-joined with
    single spaces (paragraph boundaries in the truncated region are lost).
    """
    if limit_tokens <= 0:
        raise ValueError("limit_tokens must be > 0")
    joined = "\n".join(paragraphs)
    tokens = joined.split()
    if len(tokens) <= limit_tokens:
        return joined
    return " ".join(tokens[:limit_tokens])


def render_quality_assessment(
    record: FigureRecord, token_limit: int = DEFAULT_TOKEN_LIMIT
) -> RenderedPrompt:
    """Prompt asking a vision backend to rate the author caption 1-6."""
    if not record.image_ref:
        raise ImageRequired(
            "quality assessment needs the figure image", figure_id=record.figure_id
        )
    return _render(
        "quality_assessment",
        TemplateId.QUALITY_ASSESSMENT,
        {
            "Paragraphs": concat_and_truncate_paragraphs(record.paragraphs, token_limit),
            "Caption": record.caption,
        },
        image_ref=record.image_ref,
    )


def render_description_large(
    figure_type: str, subject: str, image_ref: str | None = None
) -> RenderedPrompt:
    """Structured figure-description prompt (JSON reply, key "description")."""
    return _render(
        "description_large",
        TemplateId.DESCRIPTION_LARGE,
        {"Figure Type": figure_type, "Subject": subject},
        image_ref=image_ref,
    )


def render_description_simple(image_ref: str | None = None) -> RenderedPrompt:
    """Minimal figure-description prompt; the whole reply is the description."""
    return _render("description_simple", TemplateId.DESCRIPTION_SIMPLE, {}, image_ref=image_ref)


def render_summarize(record: FigureRecord, token_limit: int = DEFAULT_TOKEN_LIMIT) -> RenderedPrompt:
    """Summarization prompt over paragraphs and OCR only (role A)."""
    return _render(
        "summarize",
        TemplateId.SUMMARIZE,
        {
            "Paragraphs": concat_and_truncate_paragraphs(record.paragraphs, token_limit),
            "OCR": record.ocr_text,
        },
    )


def format_fewshot_examples(fewshot: FewShotSet) -> str:
    return "\n".join(f"- {caption}" for caption, _subject in fewshot.examples)


def render_caption_prompt(
    record: FigureRecord,
    description: str,
    fewshot: FewShotSet | None = None,
    token_limit: int = DEFAULT_TOKEN_LIMIT,
) -> RenderedPrompt:
    """Caption-generation prompt; the examples block appears only with few-shot.

    When ``fewshot`` is absent or empty the whole "Best Caption Examples"
    section, heading included, is omitted.
    """
    skeleton = _template("caption")
    fills = {
        "Figure Type": record.figure_type,
        "Subject": record.subject,
        "Paragraphs": concat_and_truncate_paragraphs(record.paragraphs, token_limit),
        "Figure Description": description,
        "Mentions": "\n".join(record.mentions),
        "OCR": record.ocr_text,
    }
    if fewshot and len(fewshot) > 0:
        fills["Few-shot Examples"] = format_fewshot_examples(fewshot)
        template_id = TemplateId.CAPTION_FEWSHOT
    else:
        skeleton = skeleton.replace(_FEWSHOT_BLOCK, "")
        template_id = TemplateId.CAPTION_PLAIN
    return _render("caption", template_id, fills, skeleton=skeleton)


def _candidate_texts(candidates) -> dict[str, str]:
    if isinstance(candidates, Mapping):
        texts = dict(candidates)
    else:
        # pipeline.CandidateSet (duck-typed to avoid a circular import)
        texts = {c.label: c.text for c in candidates.candidates}
    missing = [label for label in CANDIDATE_LABELS if not texts.get(label)]
    if missing:
        raise CandidatesIncomplete("missing candidate captions", labels=missing)
    return texts


def render_judgement(
    candidates,
    description: str,
    paragraphs: Iterable[str],
    mentions: Iterable[str],
    track: Track,
    image_ref: str | None = None,
    token_limit: int = DEFAULT_TOKEN_LIMIT,
) -> RenderedPrompt:
    """Best/worst selection plus post-editing prompt over four candidates.

    Candidate slots are filled by label regardless of input order. The image
    is optional here (attach via ``image_ref`` when configured).
    """
    texts = _candidate_texts(candidates)
    return _render(
        "judgement",
        TemplateId.JUDGEMENT,
        {
            "Figure Description": description,
            "Paragraphs": concat_and_truncate_paragraphs(list(paragraphs), token_limit),
            "Mentions": "\n".join(mentions),
            "Max Len": str(track.max_len_words),
            "Caption A": texts["A"],
            "Caption B": texts["B"],
            "Caption C": texts["C"],
            "Caption D": texts["D"],
        },
        image_ref=image_ref,
    )
