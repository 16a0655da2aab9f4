"""Budget learning: online loop, likelihood ascent steps, and baselines.

The raw update settles bets at face value (winners collect 1/c_y per unit).
The likelihood variants damp the same direction by eta/B(x,c), which makes
the budgets follow (for price-independent bets, exactly) a constrained
stochastic gradient ascent on the normalized log-likelihood

    L = (1/N) sum_i ln c_{y_i}(x_i)

in the square-root-budget parameterization.  A batch variant averages the
per-example directions; a weighted variant rescales the step per example,
which maximizes the correspondingly weighted likelihood.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Market, MarketError, RejectedInstance
from .solver import SolverConfig, solve_price

_ML_VARIANTS = ("ml_incremental", "ml_batch", "ml_weighted")

# Prices this small mean "nobody backed the realized class"; ln would be
# -inf, so likelihood floors here and training skips the update.
PRICE_LOG_FLOOR = 1e-300


@dataclass
class UpdateRule:
    variant: str = "ml_incremental"
    eta: float = 0.1
    class_weights: np.ndarray | None = None
    epochs: int = 1
    shuffle: bool = False

    def __post_init__(self):
        if self.variant not in ("raw_alg1",) + _ML_VARIANTS:
            raise ValueError(f"unknown update variant {self.variant!r}")
        if self.variant in _ML_VARIANTS and not self.eta > 0:
            raise ValueError("eta must be positive for likelihood updates")
        if self.variant == "ml_weighted":
            if self.class_weights is None:
                raise ValueError("ml_weighted needs class_weights")
            self.class_weights = np.asarray(self.class_weights, dtype=float)
            if np.any(self.class_weights <= 0):
                raise ValueError("class weights must be strictly positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


@dataclass
class TrainingTrace:
    """Per-epoch learning curves plus solver bookkeeping."""

    nll: list = field(default_factory=list)
    train_error: list = field(default_factory=list)
    test_error: list = field(default_factory=list)   # empty if no test set
    rejected: list = field(default_factory=list)     # skipped updates
    solver_counts: list = field(default_factory=list)  # method -> count

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "nll", "train_err", "test_err"])
            for i, (nll, tr) in enumerate(zip(self.nll, self.train_error), 1):
                te = self.test_error[i - 1] if self.test_error else ""
                writer.writerow([i, repr(nll), repr(tr), repr(te) if te != "" else ""])


def ml_incremental_step(market: Market, x, y: int, c, eta: float) -> None:
    """One likelihood-ascent step at a solved price (conserves the total)."""
    market.ml_update(x, y, c, eta)


def ml_weighted_step(market: Market, x, y: int, c, eta: float, w: float) -> None:
    """Incremental step with a per-example weight folded into the rate."""
    market.ml_update(x, y, c, eta, weight=w)


def ml_batch_step(market: Market, data, eta: float) -> None:
    """Simultaneous update from all examples (price-independent bets only).

    Averages the per-example ascent directions, so eta here plays the role
    of N times the incremental eta.
    """
    accum = np.zeros(len(market))
    probe = np.full(market.class_count, 1.0 / market.class_count)
    for x, y in zip(data.X, data.y):
        prof = market.profile(x)
        if not prof.price_independent():
            raise MarketError("batch update is defined for constant bets only")
        phi = prof.phi(probe)
        stakes = prof.budgets @ phi
        total = float(stakes.sum())
        if total <= 0:
            raise RejectedInstance("an example drew no bets; batch undefined")
        cy = stakes[y - 1] / total
        if cy <= 0:
            raise MarketError("no participant backs the realized class")
        accum[prof.active] += (phi[:, y - 1] / cy - phi.sum(axis=1)) / total
    factor = 1.0 + (eta / len(data)) * accum
    market.apply_budget_factors(np.arange(len(market)), factor)


def train_online(market: Market, data, rule: UpdateRule,
                 cfg: SolverConfig | None = None, seed=None,
                 test_data=None, solver_method: str = "auto",
                 record_trace: bool = True):
    """Present examples, solve the price, update budgets; repeat per epoch.

    Examples run in dataset order unless rule.shuffle, in which case the
    seed fixes a fresh permutation per epoch.  Rejected instances (and ones
    whose realized class drew no bets) are skipped and counted.  Returns
    (market, trace); the market is updated in place.  `record_trace=False`
    skips the per-epoch likelihood/error passes (the trace stays empty).
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    trace = TrainingTrace()
    for _ in range(rule.epochs):
        counts: dict = {}
        skipped = 0
        if rule.variant == "ml_batch":
            ml_batch_step(market, data, rule.eta)
        else:
            order = rng.permutation(len(data)) if rule.shuffle else range(len(data))
            for i in order:
                x, y = data.X[i], int(data.y[i])
                try:
                    sol = solve_price(market, x, cfg, method=solver_method)
                except RejectedInstance:
                    skipped += 1
                    continue
                counts[sol.method_used] = counts.get(sol.method_used, 0) + 1
                if sol.price[y - 1] <= PRICE_LOG_FLOOR:
                    skipped += 1
                    continue
                if rule.variant == "raw_alg1":
                    market.budget_update(x, y, sol.price)
                elif rule.variant == "ml_incremental":
                    market.ml_update(x, y, sol.price, rule.eta)
                else:
                    w = float(rule.class_weights[y - 1])
                    market.ml_update(x, y, sol.price, rule.eta, weight=w)
        trace.rejected.append(skipped)
        trace.solver_counts.append(counts)
        if record_trace:
            nll, err, _, _ = evaluate_market(market, data, cfg, solver_method)
            trace.nll.append(nll)
            trace.train_error.append(err)
            if test_data is not None:
                _, test_err, _, _ = evaluate_market(market, test_data, cfg,
                                                    solver_method)
                trace.test_error.append(test_err)
    return market, trace


def evaluate_market(market: Market, data, cfg: SolverConfig | None = None,
                    solver_method: str = "auto"):
    """One pass over a dataset: (nll, error rate, rejects, solver counts).

    Rejected instances are excluded from the likelihood but count as
    misclassifications.  Prices at the realized class are floored at
    PRICE_LOG_FLOOR so the likelihood stays finite.
    """
    cfg = cfg or SolverConfig()
    log_sum = 0.0
    priced = 0
    wrong = 0
    rejects = 0
    counts: dict = {}
    for x, y in zip(data.X, data.y):
        try:
            sol = solve_price(market, x, cfg, method=solver_method)
        except RejectedInstance:
            rejects += 1
            wrong += 1
            continue
        counts[sol.method_used] = counts.get(sol.method_used, 0) + 1
        priced += 1
        log_sum += math.log(max(sol.price[y - 1], PRICE_LOG_FLOOR))
        if int(np.argmax(sol.price)) + 1 != y:
            wrong += 1
    if priced == 0:
        raise RejectedInstance("every instance was rejected")
    return -log_sum / priced, wrong / len(data), rejects, counts


def log_likelihood(market: Market, data, cfg: SolverConfig | None = None,
                   solver_method: str = "auto") -> float:
    """Normalized log-likelihood (1/N) sum ln c_y over priced instances."""
    nll, _, _, _ = evaluate_market(market, data, cfg, solver_method)
    return -nll


def constant_likelihood_and_gradient(market: Market, data):
    """L and dL/d(gamma) for price-independent markets, gamma_m = sqrt(beta_m).

    The gradient component is gamma_j times the average over examples of
    (phi_j^y / c_y - sum_k phi_j^k) / B(x); this is what the likelihood
    steps climb.
    """
    probe = np.full(market.class_count, 1.0 / market.class_count)
    gamma = np.sqrt(market.budgets)
    accum = np.zeros(len(market))
    log_sum = 0.0
    for x, y in zip(data.X, data.y):
        prof = market.profile(x)
        if not prof.price_independent():
            raise MarketError("gradient form holds for constant bets only")
        phi = prof.phi(probe)
        stakes = prof.budgets @ phi
        total = float(stakes.sum())
        if total <= 0:
            raise RejectedInstance("an example drew no bets")
        cy = stakes[y - 1] / total
        if cy <= 0:
            raise MarketError("no participant backs the realized class")
        log_sum += math.log(cy)
        accum[prof.active] += (phi[:, y - 1] / cy - phi.sum(axis=1)) / total
    n = len(data)
    return log_sum / n, gamma * accum / n


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    ranks = np.arange(1, v.size + 1)
    support = np.nonzero(u - cumulative / ranks > 0)[0]
    rho = support[-1]
    theta = cumulative[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def implicit_online_step(weights: np.ndarray, outputs_true: np.ndarray,
                         eta_t: float) -> np.ndarray:
    """One implicit-online-learning update of simplex weights.

    Solves the Bregman-regularized negative-log-price step in closed form:
    with q = H.w, r = H.H and p = (q + sqrt(q^2 + 4 eta r)) / 2, move to
    w + eta H / p and project back onto the simplex.
    """
    w = np.asarray(weights, dtype=float)
    h = np.asarray(outputs_true, dtype=float)
    if eta_t == 0.0:
        return w.copy()
    q = float(h @ w)
    r = float(h @ h)
    if r == 0.0:
        raise MarketError("no participant outputs the true class")
    p = 0.5 * (q + math.sqrt(q * q + 4.0 * eta_t * r))
    return project_to_simplex(w + eta_t * h / p)
