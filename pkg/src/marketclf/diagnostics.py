"""Randomized solver diagnostics: cross-agreement and fallback statistics.

Builds random admissible markets per betting family and checks that every
applicable solver lands on the same price, that the returned price
conserves the total budget under the update for every outcome, and how
often the Mann iteration needs its bisection fallback.

Two market populations matter.  Generic markets draw classifier outputs
from a flat Dirichlet, which makes linear and aggressive bets genuinely
price-sensitive; the averaged Mann steps then shrink like 1/i and cannot
reach tight tolerances within a small cap, so those markets exercise the
fallback path by design.  Leaf-style markets mimic trained random-tree
leaves (almost always one-hot outputs), whose bets are effectively
price-independent: there Mann lands exactly in two passes, which is the
population behind the sub-percent fallback rates quoted for this method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .betting import AggressiveBetting, ConstantBetting, LinearBetting
from .core import Market, Participant
from .solver import SolverConfig, solve_constant, solve_double_bisection, \
    solve_mann, solve_two_class

FAMILIES = ("constant", "linear", "aggressive")


def random_market(rng, family: str, class_count: int, n_participants: int = 10,
                  leaf_style: bool = False) -> Market:
    """Random budgets in [0,1] and random classifier outputs.

    `leaf_style` draws near-one-hot outputs like pure tree leaves (with an
    occasional mixed leaf), instead of flat-Dirichlet outputs.
    """
    participants = []
    for _ in range(n_participants):
        if leaf_style and rng.random() > 0.02:
            h = np.zeros(class_count)
            h[rng.integers(class_count)] = 1.0
        elif leaf_style:
            counts = rng.integers(1, 6, size=class_count)
            h = counts / counts.sum()
        else:
            h = rng.dirichlet(np.ones(class_count))
        if family == "constant":
            bettor = ConstantBetting(h, eta=float(rng.uniform(0.2, 1.0)))
        elif family == "linear":
            bettor = LinearBetting(h)
        elif family == "aggressive":
            bettor = AggressiveBetting(h, eps=0.01)
        else:
            raise ValueError(f"unknown family {family!r}")
        participants.append(Participant(float(rng.uniform(0.0, 1.0)), bettor))
    return Market(participants, class_count)


@dataclass
class SolverCheck:
    """Outcome of one randomized cross-agreement run."""

    markets: int = 0
    max_pairwise_gap: float = 0.0
    max_conservation_error: float = 0.0
    mann_attempts: int = 0
    mann_fallbacks: int = 0
    per_family: dict = field(default_factory=dict)

    @property
    def fallback_rate(self) -> float:
        return self.mann_fallbacks / self.mann_attempts if self.mann_attempts else 0.0


def cross_agreement_check(n_markets: int = 1000, seed=0,
                          class_counts=(2, 3, 5), families=FAMILIES,
                          n_participants: int = 10, leaf_style: bool = False,
                          check_conservation: bool = True,
                          cfg: SolverConfig | None = None) -> SolverCheck:
    """Solve random markets with every applicable route and compare.

    Applicable routes: Mann (with fallback) and double bisection always,
    the scalar two-class bisection when K = 2, the closed form for the
    constant family.  The gap is the largest pairwise max-abs price
    difference; conservation is checked at the double-bisection price for
    every outcome.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    out = SolverCheck()
    x = np.zeros(1)
    for i in range(n_markets):
        family = families[i % len(families)]
        K = int(class_counts[int(rng.integers(len(class_counts)))])
        market = random_market(rng, family, K, n_participants, leaf_style)
        prices = {}
        sol_db = solve_double_bisection(market, x, cfg)
        prices["double_bisection"] = sol_db.price
        sol_mann = solve_mann(market, x, cfg)
        prices["mann"] = sol_mann.price
        out.mann_attempts += 1
        if sol_mann.method_used == "mann_fallback_bisection":
            out.mann_fallbacks += 1
        if K == 2:
            prices["two_class"] = solve_two_class(market, x, cfg).price
        if family == "constant":
            prices["analytic"] = solve_constant(market, x).price
        vals = list(prices.values())
        gap = 0.0
        for a in range(len(vals)):
            for b in range(a + 1, len(vals)):
                gap = max(gap, float(np.max(np.abs(vals[a] - vals[b]))))
        out.max_pairwise_gap = max(out.max_pairwise_gap, gap)
        fam = out.per_family.setdefault(family, {"markets": 0, "fallbacks": 0})
        fam["markets"] += 1
        fam["fallbacks"] += int(sol_mann.method_used == "mann_fallback_bisection")
        if check_conservation:
            before = market.budget_sum()
            for y in range(1, K + 1):
                trial = market.copy()
                trial.budget_update(x, y, sol_db.price)
                err = abs(trial.last_raw_budget_sum - before) / before
                out.max_conservation_error = max(out.max_conservation_error, err)
        out.markets += 1
    return out


def mann_fallback_rate(n_markets: int = 20, solves_per_market: int = 50,
                       seed=0, cfg: SolverConfig | None = None) -> SolverCheck:
    """Fallback rate of the Mann route on its deployment population.

    The iteration prices aggressive markets whose participants are the
    leaves of trained random trees.  Trees grown to purity on continuous
    features give (near-)one-hot leaf outputs, so the bets are effectively
    price-independent and the iteration lands exactly in two passes;
    fallbacks stay in the per-mille range.  Each market is a forest
    trained on a fresh synthetic dataset, budgets lightly trained, then
    solved at fresh mixture draws.
    """
    from .data import sample_mixture, synth_gaussian_pair
    from .forest import extract_leaf_participants, train_forest
    from .training import UpdateRule, train_online

    cfg = cfg or SolverConfig()
    root = np.random.SeedSequence(seed)
    out = SolverCheck()
    for market_seed in root.spawn(n_markets):
        seeds = market_seed.spawn(4)
        rng = np.random.default_rng(seeds[0])
        data, pair = synth_gaussian_pair(5, float(rng.uniform(0.05, 0.3)),
                                         100, seeds[1])
        forest = train_forest(data, 10, seeds[2])
        market = Market(
            extract_leaf_participants(forest, "aggressive", {"eps": 0.01}, 1.0),
            2,
        )
        rule = UpdateRule(variant="ml_incremental", eta=0.1, epochs=1)
        train_online(market, data, rule, cfg, record_trace=False,
                     solver_method="mann")
        eval_rng = np.random.default_rng(seeds[3])
        for x in sample_mixture(pair, solves_per_market, eval_rng):
            sol = solve_mann(market, x, cfg)
            out.mann_attempts += 1
            if sol.method_used == "mann_fallback_bisection":
                out.mann_fallbacks += 1
        out.markets += 1
    return out
