"""Hot-loop kernels with implementation selection at import.

The compiled extension (built from _ckernels.pyx) is preferred; when it is
unavailable the pure-Python twin takes over with identical semantics. Both
are exercised against each other in the test suite, and benchmarks/ compares
their throughput.
"""

from __future__ import annotations

from array import array
from typing import Sequence

try:
    from . import _ckernels as _impl

    BACKEND = "compiled"
except ImportError:  # extension not built; pure Python is fully supported
    from . import _pykernels as _impl

    BACKEND = "pure-python"


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest-common-subsequence length over two token sequences."""
    if not a or not b:
        return 0
    ids: dict[str, int] = {}

    def encode(tokens: Sequence[str]) -> array:
        out = array("l")
        for token in tokens:
            out.append(ids.setdefault(token, len(ids)))
        return out

    return _impl.lcs_length_ids(encode(a), encode(b))


def rank_pair_counts(
    x: Sequence[float], y: Sequence[float]
) -> tuple[int, int, int, int]:
    """(concordant, discordant, tied_x, tied_y) over all index pairs i<j."""
    return _impl.rank_pair_counts(array("d", x), array("d", y))
