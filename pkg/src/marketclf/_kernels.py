"""Hot numeric kernels for bet evaluation and the inner price bisection.

The arrays describe active participants row-wise (see the KIND_* codes in
`core`).  Both entry points have a compiled (numba) and a plain-numpy
implementation with identical semantics; the compiled one is used when
numba imports cleanly.  Markets are small but solvers evaluate bets tens
of thousands of times per instance batch, so per-call overhead matters
more than vector width here.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an optional accelerator
    njit = None


def phi_matrix(kinds, base, aux, c):
    """Bet-fraction matrix for active rows at price vector c (numpy path)."""
    out = np.empty_like(base)
    for kind in np.unique(kinds):
        rows = kinds == kind
        if kind == 0:
            out[rows] = base[rows]
        elif kind == 1:
            out[rows] = base[rows] * (1.0 - c)
        elif kind == 2:
            h = base[rows]
            eps = aux[rows, None]
            ramp = np.clip((h + eps - c) / eps, 0.0, 1.0)
            out[rows] = np.where(c <= h, h, h * ramp)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                phi = c * (base[rows] - np.log(c) * aux[rows, None])
            out[rows] = np.clip(np.where(c > 0, phi, 0.0), 0.0, 1.0)
    return out


def _class_bets_py(kinds, base, aux, budgets, c):
    if budgets.size == 0:
        return np.zeros(c.size)
    return budgets @ phi_matrix(kinds, base, aux, c)


def _inner_bisect_py(kinds, base, aux, budgets, n, lo, hi, cap):
    for _ in range(cap):
        mid = 0.5 * (lo + hi)
        open_ = (mid > lo) & (mid < hi)
        if not open_.any():
            break
        g = _class_bets_py(kinds, base, aux, budgets, mid) / mid - n
        up = g > 0
        lo[:] = np.where(open_ & up, mid, lo)
        hi[:] = np.where(open_ & ~up, mid, hi)
    return 0.5 * (lo + hi)


def _scalar_phi(kind, h, a, ck):
    if kind == 0:
        return h
    if kind == 1:
        return h * (1.0 - ck)
    if kind == 2:
        if ck <= h:
            return h
        if ck > h + a:
            return 0.0
        return h * (h + a - ck) / a
    if ck <= 0.0:
        return 0.0
    phi = ck * (h - math.log(ck) * a)
    if phi < 0.0:
        return 0.0
    return 1.0 if phi > 1.0 else phi


def _class_bets_scalar(kinds, base, aux, budgets, c, out):
    K = c.size
    for k in range(K):
        out[k] = 0.0
    for m in range(budgets.size):
        kind = kinds[m]
        b = budgets[m]
        a = aux[m]
        for k in range(K):
            out[k] += b * _scalar_phi(kind, base[m, k], a, c[k])


def _inner_bisect_scalar(kinds, base, aux, budgets, n, lo, hi, cap):
    K = lo.size
    mid = np.empty(K)
    bets = np.empty(K)
    for _ in range(cap):
        any_open = False
        for k in range(K):
            m = 0.5 * (lo[k] + hi[k])
            mid[k] = m
            if lo[k] < m < hi[k]:
                any_open = True
        if not any_open:
            break
        _class_bets_scalar(kinds, base, aux, budgets, mid, bets)
        for k in range(K):
            m = mid[k]
            if not (lo[k] < m < hi[k]):
                continue
            if bets[k] / m - n > 0.0:
                lo[k] = m
            else:
                hi[k] = m
    for k in range(K):
        mid[k] = 0.5 * (lo[k] + hi[k])
    return mid


if njit is not None:
    _scalar_phi = njit(cache=True, inline="always")(_scalar_phi)
    _class_bets_scalar = njit(cache=True)(_class_bets_scalar)
    _inner_bisect_scalar = njit(cache=True)(_inner_bisect_scalar)

    def class_bets(kinds, base, aux, budgets, c):
        out = np.empty(c.size)
        _class_bets_scalar(kinds, base, aux, budgets, c, out)
        return out

    def inner_bisect(kinds, base, aux, budgets, n, lo, hi, cap):
        return _inner_bisect_scalar(kinds, base, aux, budgets, float(n), lo, hi, cap)

else:  # pragma: no cover - exercised only without numba
    class_bets = _class_bets_py
    inner_bisect = _inner_bisect_py
