# cython: boundscheck=False, wraparound=False
"""Compiled metric kernels; behaviour mirrors _pykernels exactly."""

from libc.stdlib cimport free, malloc


def lcs_length_ids(long[:] a, long[:] b):
    """Longest-common-subsequence length over two integer id sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long ai, above, left, result
    cdef long *prev = <long *> malloc((m + 1) * sizeof(long))
    cdef long *curr = <long *> malloc((m + 1) * sizeof(long))
    cdef long *tmp
    if prev == NULL or curr == NULL:
        if prev != NULL:
            free(prev)
        if curr != NULL:
            free(curr)
        raise MemoryError()
    for j in range(m + 1):
        prev[j] = 0
        curr[j] = 0
    for i in range(n):
        ai = a[i]
        curr[0] = 0
        for j in range(m):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            else:
                above = prev[j + 1]
                left = curr[j]
                curr[j + 1] = above if above >= left else left
        tmp = prev
        prev = curr
        curr = tmp
    result = prev[m]
    free(prev)
    free(curr)
    return result


def rank_pair_counts(double[:] x, double[:] y):
    """(concordant, discordant, tied_x, tied_y) over all index pairs i<j."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy
    cdef long concordant = 0
    cdef long discordant = 0
    cdef long tied_x = 0
    cdef long tied_y = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
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
