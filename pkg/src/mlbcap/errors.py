"""Error hierarchy shared across the pipeline.

Every error carries a stable machine-readable ``code`` so batch reports and
HTTP responses can surface failures without parsing message strings.
"""

from __future__ import annotations


class MlbcapError(Exception):
    """Base class; ``code`` identifies the failure class."""

    code = "ERROR"

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context

    def __str__(self) -> str:
        if self.context:
            extras = ", ".join(f"{k}={v}" for k, v in self.context.items())
            return f"{self.code}: {self.message} ({extras})"
        return f"{self.code}: {self.message}"


# --- prompts ---

class ImageRequired(MlbcapError):
    code = "IMAGE_REQUIRED"


class CandidatesIncomplete(MlbcapError):
    code = "CANDIDATES_INCOMPLETE"


# --- backends ---

class BackendUnavailable(MlbcapError):
    code = "BACKEND_UNAVAILABLE"


class BackendRejected(MlbcapError):
    code = "BACKEND_REJECTED"

    def __init__(self, message: str = "", status: int = 0, **context):
        super().__init__(message, status=status, **context)
        self.status = status


class CapabilityError(MlbcapError):
    code = "CAPABILITY_ERROR"


class ParseNoObject(MlbcapError):
    code = "PARSE_NO_OBJECT"


class ParseInvalid(MlbcapError):
    code = "PARSE_INVALID"


# --- judgment ---

class JudgeParse(MlbcapError):
    code = "JUDGE_PARSE"


class JudgeLabel(MlbcapError):
    code = "JUDGE_LABEL"


class JudgeConflict(MlbcapError):
    code = "JUDGE_CONFLICT"


# --- metrics ---

class EmptyInput(MlbcapError):
    code = "EMPTY_INPUT"


class RangeError(MlbcapError):
    code = "RANGE_ERROR"


class ShapeError(MlbcapError):
    code = "SHAPE_ERROR"


class Degenerate(MlbcapError):
    code = "DEGENERATE"


class MissingRef(MlbcapError):
    code = "MISSING_REF"


# --- annotation service ---

class Validation(MlbcapError):
    code = "VALIDATION"


class Conflict(MlbcapError):
    code = "CONFLICT"


class NotFound(MlbcapError):
    code = "NOT_FOUND"
