# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled enumeration kernels for the discretized oracle."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def policy_values(double[:] a, double[:] b, long k):
    """Values ``sum(a * tau)`` and ``sum(b * tau)`` over the grid ``{0, 1/k, ..., 1}^C``.

    Policy ``n`` has ``tau[x] = digit_x(n) / k`` in base ``k + 1``, with
    score 1 as the least significant digit.
    """
    cdef Py_ssize_t C = a.shape[0], n, x, total = 1
    cdef long base = k + 1
    for x in range(C):
        total *= base
    r_arr = np.empty(total)
    v_arr = np.empty(total)
    cdef double[:] r = r_arr, v = v_arr
    cdef long[:] digit = np.zeros(C, dtype=np.int64)
    cdef double sa = 0.0, sb = 0.0, inv = 1.0 / k
    for n in range(total):
        sa = 0.0
        sb = 0.0
        for x in range(C):
            sa += a[x] * (digit[x] * inv)
            sb += b[x] * (digit[x] * inv)
        r[n] = sa
        v[n] = sb
        x = 0
        while x < C:
            digit[x] += 1
            if digit[x] < base:
                break
            digit[x] = 0
            x += 1
    return r_arr, v_arr


def best_pair(double[:] ra, double[:] va, double[:] rb, double[:] vb,
              double ca, double cb, double tol):
    """Maximize ``ca * va[i] + cb * vb[j]`` over pairs with ``|ra[i] - rb[j]| <= tol``.

    Returns ``(value, i, j)``; ``(-inf, -1, -1)`` when no pair qualifies.
    """
    cdef cnp.int64_t[:] oa = np.argsort(np.asarray(ra), kind="stable")
    cdef cnp.int64_t[:] ob = np.argsort(np.asarray(rb), kind="stable")
    cdef Py_ssize_t na = ra.shape[0], nb = rb.shape[0]
    cdef cnp.int64_t[:] dq = np.empty(nb, dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0, lo = 0, hi = 0, s, i, j
    cdef double best = -np.inf, cand, x
    cdef Py_ssize_t bi = -1, bj = -1
    for s in range(na):
        i = oa[s]
        x = ra[i]
        while hi < nb and rb[ob[hi]] <= x + tol:
            j = ob[hi]
            while tail > head and vb[dq[tail - 1]] <= vb[j]:
                tail -= 1
            dq[tail] = j
            tail += 1
            hi += 1
        while lo < hi and rb[ob[lo]] < x - tol:
            if tail > head and dq[head] == ob[lo]:
                head += 1
            lo += 1
        if tail > head:
            cand = ca * va[i] + cb * vb[dq[head]]
            if cand > best:
                best = cand
                bi = i
                bj = dq[head]
    return best, bi, bj
