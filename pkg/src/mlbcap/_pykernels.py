"""Pure-Python metric kernels; fallback twin of the compiled extension."""

from __future__ import annotations


def lcs_length_ids(a, b) -> int:
    """Longest-common-subsequence length over two integer id sequences."""
    n, m = len(a), len(b)
    prev = [0] * (m + 1)
    for i in range(n):
        curr = [0] * (m + 1)
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            else:
                above = prev[j + 1]
                left = curr[j]
                curr[j + 1] = above if above >= left else left
        prev = curr
    return prev[m]


def rank_pair_counts(x, y) -> tuple[int, int, int, int]:
    """(concordant, discordant, tied_x, tied_y) over all index pairs i<j.

    Pairs tied in either variable are excluded from both concordant and
    discordant counts; the tie totals include pairs tied in both.
    """
    n = len(x)
    concordant = discordant = tied_x = tied_y = 0
    for i in range(n - 1):
        xi = x[i]
        yi = y[i]
        for j in range(i + 1, n):
            dx = xi - x[j]
            dy = yi - y[j]
            if dx == 0:
                tied_x += 1
            if dy == 0:
                tied_y += 1
            if dx == 0 or dy == 0:
                continue
            if (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    return concordant, discordant, tied_x, tied_y
