"""Vectorized NumPy versions of the oracle kernels."""
import numpy as np


def policy_values(a, b, k):
    """Values ``sum(a * tau)`` and ``sum(b * tau)`` over the grid ``{0, 1/k, ..., 1}^C``.

    Policy ``n`` has ``tau[x] = digit_x(n) / k`` in base ``k + 1``, with
    score 1 as the least significant digit.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    levels = np.arange(k + 1) * (1.0 / k)
    r = np.zeros(1)
    v = np.zeros(1)
    for x in range(a.size):
        # the new digit is more significant, so it varies slowest
        r = (r[None, :] + a[x] * levels[:, None]).ravel()
        v = (v[None, :] + b[x] * levels[:, None]).ravel()
    return r, v


def _sparse_argmax_table(vals):
    table = [np.arange(vals.size)]
    span = 1
    while 2 * span <= vals.size:
        prev = table[-1]
        left, right = prev[:-span], prev[span:]
        table.append(np.where(vals[right] > vals[left], right, left))
        span *= 2
    return table


def best_pair(ra, va, rb, vb, ca, cb, tol):
    """Maximize ``ca * va[i] + cb * vb[j]`` over pairs with ``|ra[i] - rb[j]| <= tol``.

    Returns ``(value, i, j)``; ``(-inf, -1, -1)`` when no pair qualifies.
    """
    ra, va, rb, vb = (np.asarray(z, dtype=float) for z in (ra, va, rb, vb))
    ob = np.argsort(rb, kind="stable")
    rbs, vbs = rb[ob], vb[ob]
    lo = np.searchsorted(rbs, ra - tol, side="left")
    hi = np.searchsorted(rbs, ra + tol, side="right")
    ok = hi > lo
    if not np.any(ok):
        return -np.inf, -1, -1
    idx = np.nonzero(ok)[0]
    lo, hi = lo[ok], hi[ok]
    table = _sparse_argmax_table(vbs)
    level = np.floor(np.log2(hi - lo)).astype(int)
    cand_l = np.empty(idx.size, dtype=np.int64)
    cand_r = np.empty(idx.size, dtype=np.int64)
    for lev in np.unique(level):
        m = level == lev
        cand_l[m] = table[lev][lo[m]]
        cand_r[m] = table[lev][hi[m] - (1 << lev)]
    pick = np.where(vbs[cand_r] > vbs[cand_l], cand_r, cand_l)
    score = ca * va[idx] + cb * vbs[pick]
    s = int(np.argmax(score))
    return float(score[s]), int(idx[s]), int(ob[pick[s]])
