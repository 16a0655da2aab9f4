"""Equilibrium-price solvers.

The equilibrium price c satisfies, for every class k,

    sum_m beta_m phi_m^k(x, c) = c_k * B(x, c),        sum_k c_k = 1,

where B is the total amount staked.  Exactly at such a price the budget
update conserves the total budget for every outcome.  Four routes:

* analytic          closed form when no bet depends on the price
* two-class         bisection on the scalar two-class equation (K = 2)
* double bisection  inner bisections solve s_k(ck)/ck = n per class, an
                    outer bisection finds n with sum_k ck(n) = 1
* Mann iteration    averaged fixed-point steps c <- (1-1/i) c + F(c)/i,
                    falling back to double bisection at the iteration cap

All solvers are pure functions of (market snapshot, instance, config) and
safe to run concurrently over a test set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    Market,
    NonConvergenceError,
    NoRootError,
    RejectedInstance,
    validate_instance,
)

_EPS = np.finfo(float).eps


@dataclass
class SolverConfig:
    tol: float = 1e-9
    max_mann_iters: int = 50
    max_inner_iters: int = 200
    max_outer_iters: int = 200

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        for cap in (self.max_mann_iters, self.max_inner_iters, self.max_outer_iters):
            if cap < 1:
                raise ValueError("iteration caps must be at least 1")

    @property
    def min_price(self) -> float:
        # f_k blows up as ck -> 0, so the root is interior; the tiny cap
        # only guards the division.
        return self.tol * 1e-3


@dataclass
class PriceSolution:
    price: np.ndarray
    method_used: str
    residual: float
    iterations: int


def _profile(market, x, profile):
    if profile is None:
        x = validate_instance(x)
        return market.profile(x)
    return profile


def solve_constant(market: Market, x, profile=None) -> PriceSolution:
    """Closed-form price for markets whose bets ignore the price.

    c = sum_m beta_m phi_m / sum_m sum_k beta_m phi_m^k.  For bets
    eta * h(x) this is the budget-weighted average of the h's.
    """
    prof = _profile(market, x, profile)
    probe = np.full(market.class_count, 1.0 / market.class_count)
    s = prof.class_bets(probe)
    n = float(s.sum())
    if n <= 0:
        raise RejectedInstance("no participant bets on this instance")
    c = s / n
    residual = float(np.max(np.abs(s - c * n)))
    return PriceSolution(c, "analytic", residual, 0)


def solve_two_class(market: Market, x, cfg: SolverConfig | None = None,
                    profile=None) -> PriceSolution:
    """Bisection on the two-class equation (1-c) s2(c) - c s1(1-c) = 0.

    Writes the price as (1-c, c), c being the class-2 price.  The root is
    bracketed in (0, 1) and bisected until the bracket is at float
    resolution, so the returned residual sits far below cfg.tol whenever
    the market is admissible.
    """
    cfg = cfg or SolverConfig()
    if market.class_count != 2:
        raise ValueError("two-class solver requires exactly two classes")
    prof = _profile(market, x, profile)

    def equation(c):
        s = prof.class_bets(np.array([1.0 - c, c]))
        return (1.0 - c) * s[1] - c * s[0]

    if prof.total_bet(np.array([0.5, 0.5])) == 0.0:
        raise RejectedInstance("no participant bets on this instance")
    lo, hi = 1e-15, 1.0 - 1e-15
    g_lo, g_hi = equation(lo), equation(hi)
    if not (g_lo > 0.0 and g_hi < 0.0):
        raise NoRootError(
            "two-class equation has no sign change: no participant is "
            "willing to back one of the classes"
        )
    iters = 0
    g_mid = g_lo
    while iters < cfg.max_inner_iters:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = equation(mid)
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
        iters += 1
        if g_mid == 0.0:
            break
    c = 0.5 * (lo + hi)
    residual = abs(equation(c))
    if residual > cfg.tol:
        raise NonConvergenceError(
            f"two-class bisection stalled at residual {residual:.3e}"
        )
    return PriceSolution(np.array([1.0 - c, c]), "two_class_bisection", residual, iters)


def _inner_bisect(prof, n, lo, hi, cap):
    """Solve s_k(ck)/ck = n per class by simultaneous bisection.

    lo/hi are valid per-class brackets: s/c - n >= 0 at lo, <= 0 at hi.
    Returns (midpoints, lo, hi) after driving the brackets to float width.
    """
    lo = lo.copy()
    hi = hi.copy()
    mid = _kernels.inner_bisect(prof.kinds, prof.base, prof.aux, prof.budgets,
                                n, lo, hi, cap)
    return mid, lo, hi


def solve_double_bisection(market: Market, x, cfg: SolverConfig | None = None,
                           profile=None) -> PriceSolution:
    """Nested bisection for any admissible betting functions and K >= 2.

    The outer bracket on n starts at [max_k s_k(1), total budget] (the
    upper end follows from every participant staking at most its budget)
    and each endpoint's inner solution warm-starts the brackets of the
    next inner solve, since every ck(n) is decreasing in n.
    """
    cfg = cfg or SolverConfig()
    prof = _profile(market, x, profile)
    K = market.class_count
    uniform = np.full(K, 1.0 / K)
    if prof.total_bet(uniform) == 0.0:
        raise RejectedInstance("no participant bets on this instance")

    c_min = cfg.min_price
    ones = np.ones(K)
    n_floor = prof.class_bets(ones).max()
    budget_cap = float(prof.budgets.sum())
    n_lo = max(n_floor, budget_cap * 1e-300)
    if n_lo == 0.0:
        n_lo = np.finfo(float).tiny
    n_hi = budget_cap

    full_lo = np.full(K, c_min)
    full_hi = np.ones(K)
    c_lo_pt, lo_at_nlo, hi_at_nlo = _inner_bisect(prof, n_lo, full_lo, full_hi,
                                                  cfg.max_inner_iters)
    s_lo = c_lo_pt.sum() - 1.0
    if s_lo < -cfg.tol:
        # The root would need n below the analytic floor; only possible for
        # inadmissible betting functions.
        raise NoRootError("price mass below 1 even at the smallest total bet")
    # Bets that exceed the stake cap (the logistic family) can push the
    # equilibrium total bet above the budget sum; widen until bracketed.
    c_hi_pt, lo_at_nhi, hi_at_nhi = _inner_bisect(prof, n_hi, full_lo, full_hi,
                                                  cfg.max_inner_iters)
    expansions = 0
    while c_hi_pt.sum() - 1.0 > 0.0 and expansions < 60:
        n_lo, lo_at_nlo, hi_at_nlo = n_hi, lo_at_nhi, hi_at_nhi
        n_hi *= 2.0
        c_hi_pt, lo_at_nhi, hi_at_nhi = _inner_bisect(
            prof, n_hi, full_lo, full_hi, cfg.max_inner_iters)
        expansions += 1
    if c_hi_pt.sum() - 1.0 > cfg.tol:
        raise NoRootError("could not bracket the total-bet variable")

    c_point = c_hi_pt
    iters = 0
    while iters < cfg.max_outer_iters:
        n_mid = 0.5 * (n_lo + n_hi)
        if n_mid <= n_lo or n_mid >= n_hi:
            break
        # ck(n) decreases in n, so the previous endpoint solves bracket the
        # current roots: lo from the larger n, hi from the smaller n.
        warm_lo = np.minimum(lo_at_nhi, hi_at_nhi)
        warm_hi = np.maximum(lo_at_nlo, hi_at_nlo)
        c_point, lo_pt, hi_pt = _inner_bisect(prof, n_mid, warm_lo, warm_hi,
                                              cfg.max_inner_iters)
        gap = c_point.sum() - 1.0
        if gap > 0.0:
            n_lo, lo_at_nlo, hi_at_nlo = n_mid, lo_pt, hi_pt
        else:
            n_hi, lo_at_nhi, hi_at_nhi = n_mid, lo_pt, hi_pt
        iters += 1
        if abs(gap) <= 1e-13:
            break

    c = c_point / c_point.sum()
    s = prof.class_bets(c)
    residual = float(np.max(np.abs(s - c * s.sum())))
    scale = max(budget_cap, 1.0)
    if abs(c_point.sum() - 1.0) > cfg.tol or residual > cfg.tol * scale:
        raise NonConvergenceError(
            f"double bisection stalled: simplex gap {c_point.sum() - 1.0:.3e}, "
            f"residual {residual:.3e}"
        )
    return PriceSolution(c, "double_bisection", residual, iters)


def solve_mann(market: Market, x, cfg: SolverConfig | None = None,
               profile=None) -> PriceSolution:
    """Averaged fixed-point iteration c <- ((i-1) c + F(c)) / i.

    F(c) normalizes the per-class stakes, F_k = s_k(ck) / sum_j s_j(cj).
    The step weight is 1/i with i starting at 1, so the first step jumps
    fully onto F(c); price-independent markets therefore land exactly and
    terminate with a zero residual on the second pass.  Convergence is
    declared on sum_k |F_k(c) - ck| <= tol, and the price at which that
    residual was measured is returned (the trailing averaged nudge is not
    applied), so the reported residual is exact at the returned price.

    A total stake of zero at the uniform start or at any iterate rejects
    the instance.  Hitting the iteration cap falls back to the double
    bisection route and tags the solution accordingly.
    """
    cfg = cfg or SolverConfig()
    prof = _profile(market, x, profile)
    K = market.class_count
    c = np.full(K, 1.0 / K)
    for i in range(1, cfg.max_mann_iters + 1):
        s = prof.class_bets(c)
        n = float(s.sum())
        if n == 0.0:
            raise RejectedInstance("total bet is zero; instance rejected")
        f = s / n
        residual = float(np.abs(f - c).sum())
        if residual <= cfg.tol:
            return PriceSolution(c, "mann", residual, i)
        c = ((i - 1) * c + f) / i
    fallback = solve_double_bisection(market, x, cfg, profile=prof)
    return PriceSolution(fallback.price, "mann_fallback_bisection",
                         fallback.residual, fallback.iterations)


def solve_price(market: Market, x, cfg: SolverConfig | None = None,
                method: str = "auto", profile=None) -> PriceSolution:
    """Dispatch to the cheapest applicable solver.

    auto: closed form when no active bet depends on the price, the scalar
    bisection for two classes, Mann (with its bisection fallback) otherwise.
    """
    cfg = cfg or SolverConfig()
    x = validate_instance(np.asarray(x, dtype=float)) if profile is None else x
    prof = _profile(market, x, profile)
    if method == "auto":
        if prof.price_independent():
            method = "analytic"
        elif market.class_count == 2:
            method = "two_class"
        else:
            method = "mann"
    if method == "analytic":
        return solve_constant(market, x, profile=prof)
    if method == "two_class":
        return solve_two_class(market, x, cfg, profile=prof)
    if method == "double_bisection":
        return solve_double_bisection(market, x, cfg, profile=prof)
    if method == "mann":
        return solve_mann(market, x, cfg, profile=prof)
    raise ValueError(f"unknown solver method {method!r}")


def residual_at(market: Market, x, sol: PriceSolution) -> float:
    """Recompute the residual of a solution exactly as its method defines it."""
    prof = market.profile(validate_instance(x))
    c = sol.price
    if sol.method_used == "two_class_bisection":
        s = prof.class_bets(np.array([1.0 - c[1], c[1]]))
        return abs((1.0 - c[1]) * s[1] - c[1] * s[0])
    if sol.method_used == "mann":
        s = prof.class_bets(c)
        return float(np.abs(s / s.sum() - c).sum())
    s = prof.class_bets(c)
    return float(np.max(np.abs(s - c * s.sum())))
