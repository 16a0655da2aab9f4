"""Experiment orchestration: the benchmark protocols and demo fixtures.

`run_experiment` reproduces the four-way comparison: a random forest
baseline and markets over the same trees' leaves with constant, linear,
and aggressive betting, budgets trained online, plus an optional
implicit-online-learning baseline on the same leaf outputs.  Protocols:
repeated holdout splits (default 90/10), k-fold cross-validation with
permutations, or a supplied train/test pair.  Everything is deterministic
given the spec's seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .betting import ConstantBetting, HalfPlaneDomain, KernelBetting, SpecializedBetting
from .core import Market, Participant, RejectedInstance
from .data import (
    Dataset,
    GaussianPairSpec,
    load_csv,
    kfold_split,
    synth_gaussian_pair,
)
from .evaluate import (
    ForestPredictor,
    MarketPredictor,
    Report,
    prob_estimation_error_l2,
)
from .forest import extract_leaf_participants, train_forest
from .solver import SolverConfig
from .training import (
    PRICE_LOG_FLOOR,
    UpdateRule,
    implicit_online_step,
    train_online,
)

MARKET_METHODS = ("constant", "linear", "aggressive")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one benchmark run."""

    data_csv: str | None = None
    test_csv: str | None = None
    label_column: int = -1
    delimiter: str = ","
    synth_dim: int | None = None
    synth_bayes_error: float = 0.2
    synth_n: int = 200
    methods: tuple = ("rf", "constant", "linear", "aggressive")
    n_trees: int = 50
    beta0: float = 1.0
    eta_bet: float = 1.0
    eps: float = 0.01
    rule_variant: str = "ml_incremental"
    eta: float | None = None          # default: 10 / N_train
    epochs: int = 1
    protocol: str = "holdout"         # holdout | kfold
    train_fraction: float = 0.9
    repeats: int = 10
    folds: int = 10
    permutations: int = 1
    n_eval_probability: int = 1000
    seed: int = 0

    def to_doc(self) -> dict:
        doc = asdict(self)
        doc["methods"] = list(self.methods)
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        doc = dict(doc)
        if "methods" in doc:
            doc["methods"] = tuple(doc["methods"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_doc(json.load(fh))


def _load_spec_data(spec: ExperimentSpec):
    if spec.data_csv is not None:
        data = load_csv(spec.data_csv, spec.label_column, spec.delimiter)
        test = (load_csv(spec.test_csv, spec.label_column, spec.delimiter)
                if spec.test_csv else None)
        return data, test, None
    if spec.synth_dim is None:
        raise ValueError("experiment needs either data_csv or synth_dim")
    data, pair = synth_gaussian_pair(spec.synth_dim, spec.synth_bayes_error,
                                     spec.synth_n, spec.seed)
    return data, None, pair


def _splits(spec: ExperimentSpec, data: Dataset, test: Dataset | None):
    """Yield (train, test, seed) triples per the evaluation protocol."""
    root = np.random.SeedSequence(spec.seed)
    if test is not None:
        for child in root.spawn(spec.repeats):
            yield data, test, child
        return
    if spec.protocol == "holdout":
        for child in root.spawn(spec.repeats):
            rng = np.random.default_rng(child)
            perm = rng.permutation(len(data))
            n_train = max(1, int(round(spec.train_fraction * len(data))))
            n_train = min(n_train, len(data) - 1)
            yield (data.subset(perm[:n_train]), data.subset(perm[n_train:]),
                   child.spawn(1)[0])
        return
    if spec.protocol == "kfold":
        for child in root.spawn(spec.permutations):
            fold_seed = np.random.default_rng(child).integers(2**32)
            fold_children = child.spawn(spec.folds)
            for (train_idx, test_idx), fold_child in zip(
                    kfold_split(data, spec.folds, fold_seed), fold_children):
                yield data.subset(train_idx), data.subset(test_idx), fold_child
        return
    raise ValueError(f"unknown protocol {spec.protocol!r}")


def _predictor_metrics(predictor, test: Dataset, pair: GaussianPairSpec | None,
                       l2_seed, n_eval: int = 1000) -> dict:
    log_sum = 0.0
    priced = 0
    wrong = 0
    rejected = 0
    for x, y in zip(test.X, test.y):
        try:
            price = predictor.predict(x)
        except RejectedInstance:
            rejected += 1
            wrong += 1
            continue
        priced += 1
        log_sum += math.log(max(price[int(y) - 1], PRICE_LOG_FLOOR))
        if int(np.argmax(price)) + 1 != int(y):
            wrong += 1
    row = {
        "misclassification": wrong / len(test),
        "nll": -log_sum / priced if priced else float("inf"),
        "rejected": float(rejected),
    }
    if pair is not None:
        l2, _ = prob_estimation_error_l2(predictor, pair, n_eval, l2_seed)
        row["l2_probability_error"] = l2
    return row


def _train_market(method: str, forest, train: Dataset, spec: ExperimentSpec,
                  seed, cfg: SolverConfig):
    params = {"eta": spec.eta_bet} if method == "constant" else {"eps": spec.eps}
    participants = extract_leaf_participants(forest, method, params, spec.beta0)
    market = Market(participants, train.class_count)
    eta = spec.eta if spec.eta is not None else 10.0 / len(train)
    rule = UpdateRule(variant=spec.rule_variant, eta=eta, epochs=spec.epochs)
    train_online(market, train, rule, cfg, seed=seed, record_trace=False)
    return market


def _implicit_metrics(forest, train: Dataset, test: Dataset,
                      pair: GaussianPairSpec | None, spec: ExperimentSpec,
                      l2_seed) -> dict:
    """Implicit online learning over the leaf outputs, weights on the simplex."""
    participants = extract_leaf_participants(forest, "constant", {"eta": 1.0}, 1.0)
    outputs = Market(participants, train.class_count)

    def leaf_matrix(x):
        probe = np.full(train.class_count, 1.0 / train.class_count)
        return outputs.bet_matrix(x, probe)

    m = len(outputs)
    w = np.full(m, 1.0 / m)
    t = 0
    for _ in range(spec.epochs):
        for x, y in zip(train.X, train.y):
            t += 1
            h_true = leaf_matrix(x)[:, int(y) - 1]
            if not h_true.any():
                continue
            w = implicit_online_step(w, h_true, 1.0 / math.sqrt(t))

    class _Predictor:
        solver_counts: dict = {}

        def predict(self, x):
            scores = w @ leaf_matrix(x)
            total = scores.sum()
            return scores / total if total > 0 else np.full_like(scores, 1e-300)

    return _predictor_metrics(_Predictor(), test, pair, l2_seed)


def run_experiment(spec: ExperimentSpec, cfg: SolverConfig | None = None) -> Report:
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    data, test, pair = _load_spec_data(spec)
    report = Report(methods=list(spec.methods),
                    per_fold={m: [] for m in spec.methods},
                    spec=spec.to_doc())
    for train, split_test, seed in _splits(spec, data, test):
        children = seed.spawn(3)
        forest = train_forest(train, spec.n_trees, children[0])
        l2_seed = np.random.default_rng(children[1]).integers(2**32)
        train_seed = np.random.default_rng(children[2]).integers(2**32)
        for method in spec.methods:
            if method == "rf":
                predictor = ForestPredictor(forest)
                row = _predictor_metrics(predictor, split_test, pair, l2_seed)
            elif method in MARKET_METHODS:
                market = _train_market(method, forest, train, spec,
                                       train_seed, cfg)
                predictor = MarketPredictor(market, cfg)
                row = _predictor_metrics(predictor, split_test, pair, l2_seed)
                for k, v in predictor.solver_counts.items():
                    report.solver_counts[k] = report.solver_counts.get(k, 0) + v
            elif method == "implicit":
                row = _implicit_metrics(forest, train, split_test, pair,
                                        spec, l2_seed)
            else:
                raise ValueError(f"unknown method {method!r}")
            report.per_fold[method].append(row)
    report.finalize()
    report.wall_clock_sec = time.perf_counter() - started
    return report


# -- synthetic difficulty sweep -------------------------------------------


def run_synth_benchmark(levels, datasets_per_level: int, dim: int = 10,
                        n: int = 200, n_trees: int = 50, eta: float = 0.1,
                        epochs: int = 1,
                        methods=("rf", "constant", "linear", "aggressive"),
                        n_eval: int = 1000, seed=0,
                        cfg: SolverConfig | None = None):
    """Probability-estimation sweep over Bayes-error levels.

    Returns plot-data rows: one dict per (level, dataset, method) with the
    L2 probability error and the misclassification of a fresh joint sample,
    mirroring the error-versus-difficulty figures.
    """
    cfg = cfg or SolverConfig()
    rows = []
    root = np.random.SeedSequence(seed)
    for level, level_seed in zip(levels, root.spawn(len(levels))):
        for d_idx, ds_seed in enumerate(level_seed.spawn(datasets_per_level)):
            seeds = ds_seed.spawn(4)
            data, pair = synth_gaussian_pair(dim, level, n, seeds[0])
            forest = train_forest(data, n_trees, seeds[1])
            eval_rng = np.random.default_rng(seeds[2])
            l2_seed = eval_rng.integers(2**32)
            test = _sample_joint(pair, n_eval, eval_rng)
            train_seed = np.random.default_rng(seeds[3]).integers(2**32)
            for method in methods:
                if method == "rf":
                    predictor = ForestPredictor(forest)
                else:
                    params = ({"eta": 1.0} if method == "constant"
                              else {"eps": 0.01})
                    market = Market(
                        extract_leaf_participants(forest, method, params, 1.0),
                        2,
                    )
                    rule = UpdateRule(variant="ml_incremental", eta=eta,
                                      epochs=epochs)
                    train_online(market, data, rule, cfg, seed=train_seed,
                                 record_trace=False)
                    predictor = MarketPredictor(market, cfg)
                row = _predictor_metrics(predictor, test, pair, l2_seed)
                rows.append({
                    "bayes_error": float(level),
                    "dataset": d_idx,
                    "method": method,
                    "l2_probability_error": row["l2_probability_error"],
                    "misclassification": row["misclassification"],
                    "excess_error": row["misclassification"] - float(level),
                })
    return rows


def _sample_joint(pair: GaussianPairSpec, n: int, rng) -> Dataset:
    y = rng.integers(1, 3, size=n)
    X = rng.standard_normal((n, pair.dim))
    X[y == 2] += pair.mu1
    return Dataset(X, y, class_count=2)


# -- demo fixtures ---------------------------------------------------------


TRIANGLE_VERTICES = ((-0.9, -0.8), (0.9, -0.8), (0.0, 0.9))


def triangle_market(beta0: float = 1.0) -> Market:
    """Six half-plane specialists around a triangle: class 2 inside.

    For each side, one participant backs class 2 on the inner half-plane
    and one backs class 1 on the outer half-plane.  The outer three are
    flawless inside their domains; training just has to raise their
    budgets enough to outvote the inner ones on outside points.
    """
    verts = [np.asarray(v, dtype=float) for v in TRIANGLE_VERTICES]
    participants = []
    for i in range(3):
        p, q = verts[i], verts[(i + 1) % 3]
        r = verts[(i + 2) % 3]
        normal = np.array([-(q[1] - p[1]), q[0] - p[0]])
        offset = -float(normal @ p)
        if normal @ r + offset < 0:
            normal, offset = -normal, -offset
        inside = HalfPlaneDomain(normal, offset)
        outside = HalfPlaneDomain(-normal, -offset)
        participants.append(Participant(
            beta0, SpecializedBetting(ConstantBetting([0.0, 1.0]), inside)))
        participants.append(Participant(
            beta0, SpecializedBetting(ConstantBetting([1.0, 0.0]), outside)))
    return Market(participants, 2)


def in_triangle(x) -> bool:
    verts = [np.asarray(v, dtype=float) for v in TRIANGLE_VERTICES]
    for i in range(3):
        p, q = verts[i], verts[(i + 1) % 3]
        r = verts[(i + 2) % 3]
        normal = np.array([-(q[1] - p[1]), q[0] - p[0]])
        offset = -float(normal @ p)
        side = normal @ x + offset
        ref = normal @ r + offset
        if side * ref < 0:
            return False
    return True


def sample_triangle_points(n_inside: int, n_outside: int, rng) -> Dataset:
    """Uniform draws from the demo box, labeled by triangle membership."""
    box = 1.2
    points = []
    labels = []
    need_in, need_out = n_inside, n_outside
    while need_in > 0 or need_out > 0:
        x = rng.uniform(-box, box, size=2)
        if in_triangle(x):
            if need_in > 0:
                points.append(x)
                labels.append(2)
                need_in -= 1
        elif need_out > 0:
            points.append(x)
            labels.append(1)
            need_out -= 1
    return Dataset(np.asarray(points), np.asarray(labels), class_count=2)


def run_triangle_demo(seed=0, n_train: int = 600, eta: float = 0.05,
                      epochs: int = 1, n_eval_each: int = 1000,
                      cfg: SolverConfig | None = None) -> dict:
    """Train the six-specialist market and score fresh points.

    Returns accuracy over n_eval_each inside plus n_eval_each outside
    points, with the trained budgets for inspection.  The inner
    specialists only ever lose budget (on inside points all bettors agree,
    so nobody gains), hence the gentle single-epoch default: it separates
    the budgets by orders of magnitude while keeping every participant
    solvent.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    train = sample_triangle_points(n_train // 2, n_train - n_train // 2, rng)
    market = triangle_market()
    rule = UpdateRule(variant="ml_incremental", eta=eta, epochs=epochs)
    train_online(market, train, rule, cfg, record_trace=False)
    test = sample_triangle_points(n_eval_each, n_eval_each, rng)
    predictor = MarketPredictor(market, cfg)
    wrong = 0
    rejected = 0
    for x, y in zip(test.X, test.y):
        try:
            price = predictor.predict(x)
        except RejectedInstance:
            rejected += 1
            wrong += 1
            continue
        if int(np.argmax(price)) + 1 != int(y):
            wrong += 1
    return {
        "accuracy": 1.0 - wrong / len(test),
        "n_eval": len(test),
        "rejected": rejected,
        "budgets": [float(b) for b in market.budgets],
        "test": test,
        "market": market,
    }


def run_kernel_demo(seed=0, n_train: int = 1000, sigma: float = 0.2,
                    eta: float = 1.0, epochs: int = 1, radius: float = 0.7,
                    cfg: SolverConfig | None = None) -> dict:
    """Online RBF-kernel market on a disc-in-square boundary.

    One participant per training point, betting its RBF similarity on its
    own label.  Returns the training accuracy of the trained market.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n_train, 2))
    y = np.where(np.sum(X**2, axis=1) < radius**2, 2, 1).astype(np.int64)
    data = Dataset(X, y, class_count=2)
    participants = [
        Participant(1.0, KernelBetting(x, int(label), ("rbf", sigma)))
        for x, label in zip(X, y)
    ]
    market = Market(participants, 2)
    rule = UpdateRule(variant="ml_incremental", eta=eta, epochs=epochs)
    train_online(market, data, rule, cfg, record_trace=False)
    predictor = MarketPredictor(market, cfg)
    wrong = 0
    for x, label in zip(data.X, data.y):
        price = predictor.predict(x)
        if int(np.argmax(price)) + 1 != int(label):
            wrong += 1
    return {
        "train_accuracy": 1.0 - wrong / len(data),
        "market": market,
        "data": data,
    }
