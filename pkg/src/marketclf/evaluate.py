"""Prediction metrics and experiment reports.

Predictors unify markets and forests behind `predict(x) -> price vector`;
markets may reject an instance (no bets), which the metrics count as a
misclassification and report separately.  Reports carry per-fold metric
rows plus their means and serialize to JSON or CSV with stable ordering
and full-precision floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import Market, RejectedInstance
from .data import GaussianPairSpec, bayes_posterior, sample_mixture
from .forest import forest_predict
from .solver import SolverConfig, solve_price


class MarketPredictor:
    """Price a market per instance; counts solver methods as it goes."""

    def __init__(self, market: Market, cfg: SolverConfig | None = None,
                 method: str = "auto"):
        self.market = market
        self.cfg = cfg or SolverConfig()
        self.method = method
        self.solver_counts: dict = {}

    def predict(self, x) -> np.ndarray:
        sol = solve_price(self.market, x, self.cfg, method=self.method)
        self.solver_counts[sol.method_used] = (
            self.solver_counts.get(sol.method_used, 0) + 1
        )
        return sol.price


class ForestPredictor:
    """Averaged-vote forest output; never rejects."""

    def __init__(self, forest):
        self.forest = forest
        self.solver_counts: dict = {}

    def predict(self, x) -> np.ndarray:
        return forest_predict(self.forest, x)


def misclassification_error(predictor, data):
    """Fraction of instances whose argmax price misses the label.

    Argmax ties break toward the smaller class index.  Rejected instances
    count as errors; returns (error_rate, rejected_count).
    """
    wrong = 0
    rejected = 0
    for x, y in zip(data.X, data.y):
        try:
            price = predictor.predict(x)
        except RejectedInstance:
            rejected += 1
            wrong += 1
            continue
        if int(np.argmax(price)) + 1 != int(y):
            wrong += 1
    return wrong / len(data), rejected


def prob_estimation_error_l2(predictor, spec: GaussianPairSpec,
                             n_eval: int = 1000, seed=0):
    """Monte-Carlo squared error of the class-2 price against the true
    posterior, sampling instances from the pair's mixture marginal.

    Returns (error, rejected_count); rejected draws are excluded from the
    mean.
    """
    rng = np.random.default_rng(seed)
    X = sample_mixture(spec, n_eval, rng)
    total = 0.0
    used = 0
    rejected = 0
    for x in X:
        try:
            price = predictor.predict(x)
        except RejectedInstance:
            rejected += 1
            continue
        truth = bayes_posterior(spec, x)
        total += (float(price[1]) - truth) ** 2
        used += 1
    if used == 0:
        raise RejectedInstance("every evaluation draw was rejected")
    return total / used, rejected


@dataclass
class Report:
    """Per-method, per-fold metrics with their means.

    `per_fold[method]` is a list of metric dicts (one per fold/repeat);
    `aggregate[method]` holds the arithmetic mean of each metric across
    folds.  Solver diagnostics accumulate price-solve method counts,
    including any Mann fallbacks.
    """

    methods: list
    per_fold: dict
    aggregate: dict = field(default_factory=dict)
    solver_counts: dict = field(default_factory=dict)
    wall_clock_sec: float = 0.0
    spec: dict = field(default_factory=dict)

    def finalize(self) -> "Report":
        self.aggregate = {}
        for method in self.methods:
            rows = self.per_fold[method]
            keys = sorted({k for row in rows for k in row})
            self.aggregate[method] = {
                k: float(np.mean([row[k] for row in rows if k in row]))
                for k in keys
            }
        return self

    def to_doc(self, with_timing: bool = False) -> dict:
        doc = {
            "format": "marketclf.report/1",
            "methods": list(self.methods),
            "per_fold": {m: self.per_fold[m] for m in self.methods},
            "aggregate": {m: self.aggregate[m] for m in self.methods},
            "solver_counts": dict(sorted(self.solver_counts.items())),
            "spec": self.spec,
        }
        if with_timing:
            doc["wall_clock_sec"] = self.wall_clock_sec
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Report":
        report = cls(
            methods=list(doc["methods"]),
            per_fold=doc["per_fold"],
            aggregate=doc["aggregate"],
            solver_counts=doc.get("solver_counts", {}),
            wall_clock_sec=doc.get("wall_clock_sec", 0.0),
            spec=doc.get("spec", {}),
        )
        return report


def _g17(x) -> str:
    return format(float(x), ".17g")


def emit_report(report: Report, fmt: str, path, with_timing: bool = False) -> None:
    """Write a report as JSON or as per-fold CSV rows.

    JSON keeps insertion order (methods, then folds); CSV emits one row per
    (method, fold) with a header, floats at 17 significant digits.  Timing
    is omitted unless requested so identical runs produce identical bytes.
    """
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(report.to_doc(with_timing=with_timing), fh, indent=1)
            fh.write("\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    keys = sorted({k for m in report.methods for row in report.per_fold[m] for k in row})
    lines = ["method,fold," + ",".join(keys)]
    for method in report.methods:
        for i, row in enumerate(report.per_fold[method]):
            cells = [_g17(row[k]) if k in row else "" for k in keys]
            lines.append(f"{method},{i}," + ",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
