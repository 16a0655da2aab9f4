"""Betting-function families and the specialization wrapper.

Every betting function maps an instance and a candidate price vector to
per-class budget fractions.  All families here are immutable after
construction and evaluation is pure, so instances can be shared freely
across threads and markets.

The families differ in how the fraction for class k responds to that
class's own price ck:

* constant    -- ignores the price entirely (scaled classifier output)
* linear      -- scales the classifier output by (1 - ck)
* aggressive  -- full bet up to ck = h_k, then a linear ramp of width eps
* logistic    -- one participant per feature; reproduces logistic regression
* kernel      -- a training example betting its similarity to the instance
* specialized -- any of the above restricted to a subdomain of feature space
"""

from __future__ import annotations

import numpy as np

from .core import (
    KIND_AGGRESSIVE,
    KIND_CONSTANT,
    KIND_LINEAR,
    KIND_LOGISTIC,
)


def _as_probs(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if np.any(h < 0) or np.any(h > 1):
        raise ValueError("classifier output entries must lie in [0, 1]")
    if abs(h.sum() - 1.0) > 1e-9:
        raise ValueError(f"classifier output must sum to 1, got {h.sum()!r}")
    return h


class BettingFunction:
    """Shared hooks: `fractions`, and the solver-entry protocol.

    `solver_entry(x, K)` returns (kind, base, aux) describing the
    per-class fractions as a function of each class's own price; see the
    KIND_* codes in `core`.  `static_entry(K)` returns the same triple when
    it does not depend on x (letting markets precompile it), else None.
    """

    family = "abstract"

    def fractions(self, x, c) -> np.ndarray:
        kind, base, aux = self.solver_entry(np.asarray(x, dtype=float), len(c))
        return _entry_fractions(kind, base, aux, np.asarray(c, dtype=float))

    def solver_entry(self, x, class_count):
        raise NotImplementedError

    def static_entry(self, class_count):
        return None


def _entry_fractions(kind, base, aux, c):
    if kind == KIND_CONSTANT:
        return base.copy()
    if kind == KIND_LINEAR:
        return base * (1.0 - c)
    if kind == KIND_AGGRESSIVE:
        ramp = np.clip((base + aux - c) / aux, 0.0, 1.0)
        return np.where(c <= base, base, base * ramp)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = c * (base - np.log(c) * aux)
    return np.clip(np.where(c > 0, phi, 0.0), 0.0, 1.0)


class ConstantBetting(BettingFunction):
    """Bet eta * h regardless of the price.

    `h` is either a fixed probability vector or a callable h(x) returning
    one (a trained classifier).  eta in (0, 1] scales the stake.
    """

    family = "constant"

    def __init__(self, h, eta: float = 1.0):
        if not 0 < eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {eta}")
        self.eta = float(eta)
        self.h = h if callable(h) else _as_probs(h)

    def _h_at(self, x):
        return _as_probs(self.h(x)) if callable(self.h) else self.h

    def solver_entry(self, x, class_count):
        return KIND_CONSTANT, self.eta * self._h_at(x), 0.0

    def static_entry(self, class_count):
        if callable(self.h):
            return None
        return KIND_CONSTANT, self.eta * self.h, 0.0


class LinearBetting(BettingFunction):
    """Bet (1 - ck) * h_k: back off linearly as a contract gets expensive."""

    family = "linear"

    def __init__(self, h):
        self.h = h if callable(h) else _as_probs(h)

    def _h_at(self, x):
        return _as_probs(self.h(x)) if callable(self.h) else self.h

    def solver_entry(self, x, class_count):
        return KIND_LINEAR, self._h_at(x), 0.0

    def static_entry(self, class_count):
        if callable(self.h):
            return None
        return KIND_LINEAR, self.h, 0.0


class AggressiveBetting(BettingFunction):
    """Bet the full h_k while ck <= h_k, nothing above h_k + eps, ramp between."""

    family = "aggressive"

    def __init__(self, h, eps: float = 0.01):
        if not eps > 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.eps = float(eps)
        self.h = h if callable(h) else _as_probs(h)

    def _h_at(self, x):
        return _as_probs(self.h(x)) if callable(self.h) else self.h

    def solver_entry(self, x, class_count):
        return KIND_AGGRESSIVE, self._h_at(x), self.eps

    def static_entry(self, class_count):
        if callable(self.h):
            return None
        return KIND_AGGRESSIVE, self.h, self.eps


class LogisticBetting(BettingFunction):
    """Two-class feature bettor whose market reproduces logistic regression.

    Participant m watches feature `feature_index` and, writing c for the
    class-2 price and B for the (conserved) total market budget, stakes

        phi_1 = (1-c) * (x_m_pos - ln(1-c)/B)
        phi_2 =     c * (-x_m_neg - ln(c)/B)

    with x_pos = max(x_m, 0) and x_neg = min(x_m, 0).  A market of one such
    participant per feature has equilibrium class-2 price
    1 / (1 + exp(sum_m beta_m x_m)).

    Fractions are clamped per class to [0, 1]; for large |x_m| the raw
    formulas can exceed 1 per class or in total, so standardize features
    before using this family.  Because the aggregate stake can exceed the
    budget, this family is exempt from the total-stake cap the other
    families obey.
    """

    family = "logistic"

    def __init__(self, feature_index: int, total_budget: float):
        if total_budget <= 0:
            raise ValueError("total_budget must be positive")
        self.feature_index = int(feature_index)
        self.total_budget = float(total_budget)

    def solver_entry(self, x, class_count):
        if class_count != 2:
            raise ValueError("logistic betting is defined for two classes")
        xm = float(x[self.feature_index])
        base = np.array([max(xm, 0.0), -min(xm, 0.0)])
        return KIND_LOGISTIC, base, 1.0 / self.total_budget


class KernelBetting(BettingFunction):
    """A stored training example betting its similarity to the instance.

    With u = similarity(ref_x, x), bets u+ on its own label and -u- on the
    other class (two-class only).  `kernel` is "cosine" or ("rbf", sigma);
    cosine requires nonzero instances, the RBF uses exp(-||r - x||^2 / s^2).
    Price-independent, so kernel markets solve in closed form.
    """

    family = "kernel"

    def __init__(self, ref_x, ref_y: int, kernel="cosine"):
        self.ref_x = np.asarray(ref_x, dtype=float)
        if ref_y not in (1, 2):
            raise ValueError("kernel betting is defined for two classes")
        self.ref_y = int(ref_y)
        if kernel == "cosine":
            self.kernel = "cosine"
            self.sigma = None
            self._norm = float(np.linalg.norm(self.ref_x))
            if self._norm == 0:
                raise ValueError("cosine kernel requires a nonzero reference")
        else:
            name, sigma = kernel
            if name != "rbf" or sigma <= 0:
                raise ValueError(f"unknown kernel spec {kernel!r}")
            self.kernel = "rbf"
            self.sigma = float(sigma)
            self._norm = None

    def similarity(self, x) -> float:
        if self.kernel == "cosine":
            nx = np.linalg.norm(x)
            if nx == 0:
                raise ValueError("cosine kernel undefined on a zero instance")
            return float(self.ref_x @ x / (self._norm * nx))
        d2 = float(np.sum((self.ref_x - x) ** 2))
        return float(np.exp(-d2 / self.sigma**2))

    def solver_entry(self, x, class_count):
        if class_count != 2:
            raise ValueError("kernel betting is defined for two classes")
        u = self.similarity(x)
        base = np.zeros(2)
        if u >= 0:
            base[self.ref_y - 1] = u
        else:
            base[2 - self.ref_y] = -u
        return KIND_CONSTANT, base, 0.0


class BoxDomain:
    """Axis-aligned box: per-feature half-open intervals [low, high).

    The half-open convention matches the `<` test of tree splits, so the
    leaf boxes of a tree partition feature space exactly.
    """

    __slots__ = ("lows", "highs")

    def __init__(self, lows, highs):
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        if self.lows.shape != self.highs.shape:
            raise ValueError("lows and highs must have equal length")
        if np.any(self.lows >= self.highs):
            raise ValueError("each interval needs low < high")

    @classmethod
    def from_triples(cls, feature_count: int, triples):
        """Build from (feature_index, low, high) constraints; unconstrained
        features span (-inf, inf)."""
        lows = np.full(feature_count, -np.inf)
        highs = np.full(feature_count, np.inf)
        for f, lo, hi in triples:
            lows[f] = max(lows[f], lo)
            highs[f] = min(highs[f], hi)
        return cls(lows, highs)

    def contains(self, x) -> bool:
        return bool(np.all((x >= self.lows) & (x < self.highs)))

    def triples(self):
        out = []
        for f, (lo, hi) in enumerate(zip(self.lows, self.highs)):
            if lo != -np.inf or hi != np.inf:
                out.append((f, float(lo), float(hi)))
        return out


class HalfPlaneDomain:
    """Half-space w . x + b >= 0."""

    __slots__ = ("weights", "offset")

    def __init__(self, weights, offset: float):
        self.weights = np.asarray(weights, dtype=float)
        self.offset = float(offset)

    def contains(self, x) -> bool:
        return bool(self.weights @ x + self.offset >= 0.0)


class SpecializedBetting(BettingFunction):
    """Restrict another betting function to a domain of expertise.

    Outside the domain the participant stakes nothing (and markets treat it
    as absent); inside, it bets exactly as the wrapped function does.
    """

    family = "specialized"

    def __init__(self, inner: BettingFunction, domain):
        self.inner = inner
        self.domain = domain

    def fractions(self, x, c) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.domain.contains(x):
            return np.zeros(len(c))
        return self.inner.fractions(x, c)

    def solver_entry(self, x, class_count):
        # Markets filter on the domain before asking for entries, so this is
        # only reached for instances inside the domain (or by direct use).
        if not self.domain.contains(x):
            return KIND_CONSTANT, np.zeros(class_count), 0.0
        return self.inner.solver_entry(x, class_count)

    def static_entry(self, class_count):
        return self.inner.static_entry(class_count)
