"""Random trees, forests, and their leaves as specialized market participants.

Each tree node is split on one feature chosen uniformly at random among the
features that still vary at that node; the threshold minimizes Gini impurity
over midpoints of the sorted distinct values.  Nodes stop when pure, smaller
than two samples, or constant in every feature, so leaves normally end up
pure.  A leaf stores its class counts and an axis-aligned box (the root-to-
leaf conjunction of split tests), which makes it a specialized constant,
linear, or aggressive bettor over exactly that box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .betting import (
    AggressiveBetting,
    BoxDomain,
    ConstantBetting,
    LinearBetting,
    SpecializedBetting,
)
from .core import Participant


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None  # leaf class counts, length K

    @property
    def is_leaf(self) -> bool:
        return self.counts is not None


@dataclass
class RandomTree:
    root: TreeNode
    class_count: int
    feature_count: int
    leaves: list = field(default_factory=list)  # (node, BoxDomain) pairs

    def leaf_for(self, x) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node

    def predict_proba(self, x) -> np.ndarray:
        counts = self.leaf_for(x).counts
        return counts / counts.sum()


def _gini_best_threshold(values, labels, class_count):
    """Best split threshold of one feature by Gini impurity, or None.

    Candidates are midpoints between consecutive distinct sorted values.
    Returns (threshold, impurity) for the best candidate.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    y = labels[order]
    n = v.size
    # one-hot cumulative class counts along the sorted order
    onehot = np.zeros((n, class_count))
    onehot[np.arange(n), y - 1] = 1.0
    left = np.cumsum(onehot, axis=0)
    total = left[-1]
    # split after position i (left gets i+1 samples); only where value changes
    cut = np.nonzero(v[1:] > v[:-1])[0]
    if cut.size == 0:
        return None
    nl = (cut + 1).astype(float)
    nr = n - nl
    lc = left[cut]
    rc = total - lc
    gini_l = 1.0 - np.sum((lc / nl[:, None]) ** 2, axis=1)
    gini_r = 1.0 - np.sum((rc / nr[:, None]) ** 2, axis=1)
    impurity = (nl * gini_l + nr * gini_r) / n
    best = np.argmin(impurity)
    i = cut[best]
    thr = 0.5 * (v[i] + v[i + 1])
    # guard against midpoints that round onto an endpoint
    if not v[i] < thr:
        thr = v[i + 1]
    return float(thr), float(impurity[best])


def train_tree(data, seed) -> RandomTree:
    """Grow one random tree on the whole dataset (no resampling here)."""
    if len(data) == 0:
        raise ValueError("cannot train a tree on an empty dataset")
    rng = np.random.default_rng(seed)
    X, y = data.X, data.y
    K, F = data.class_count, data.feature_count
    leaves: list = []
    root = TreeNode()
    # Depth-first with an explicit stack; trees grown to purity can get
    # deeper than the interpreter recursion limit on large datasets.
    stack = [(root, np.arange(len(data)),
              np.full(F, -np.inf), np.full(F, np.inf))]
    while stack:
        node, idx, lows, highs = stack.pop()
        labels = y[idx]
        counts = np.bincount(labels, minlength=K + 1)[1:].astype(float)
        cols = X[idx]
        varying = np.nonzero(cols.min(axis=0) < cols.max(axis=0))[0]
        if np.count_nonzero(counts) <= 1 or idx.size < 2 or varying.size == 0:
            node.counts = counts
            leaves.append((node, BoxDomain(lows, highs)))
            continue
        feature = int(varying[rng.integers(varying.size)])
        thr, _ = _gini_best_threshold(X[idx, feature], labels, K)
        go_left = X[idx, feature] < thr
        node.feature = feature
        node.threshold = thr
        node.left = TreeNode()
        node.right = TreeNode()
        l_lows, l_highs = lows.copy(), highs.copy()
        l_highs[feature] = min(l_highs[feature], thr)
        r_lows = lows.copy()
        r_lows[feature] = max(r_lows[feature], thr)
        stack.append((node.right, idx[~go_left], r_lows, highs))
        stack.append((node.left, idx[go_left], l_lows, l_highs))
    return RandomTree(root, K, F, leaves)


def train_forest(data, n_trees: int = 50, seed=0) -> list[RandomTree]:
    """Train trees on independent bootstrap resamples (with replacement)."""
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    forest = []
    for s in seeds:
        rng = np.random.default_rng(s)
        idx = rng.integers(0, len(data), size=len(data))
        forest.append(train_tree(data.subset(idx), rng))
    return forest


def forest_predict(forest, x) -> np.ndarray:
    """Average of the per-tree leaf class-probability vectors."""
    acc = np.zeros(forest[0].class_count)
    for tree in forest:
        acc += tree.predict_proba(x)
    return acc / len(forest)


def extract_leaf_participants(forest, family: str = "constant",
                              family_params: dict | None = None,
                              beta0: float = 1.0) -> list[Participant]:
    """One specialized participant per leaf across the whole forest.

    The leaf's class histogram becomes its classifier output h, its box its
    domain.  Every instance lands in exactly one leaf per tree, so markets
    built from these participants never reject.
    """
    params = family_params or {}
    out = []
    for tree in forest:
        for node, box in tree.leaves:
            h = node.counts / node.counts.sum()
            if family == "constant":
                inner = ConstantBetting(h, eta=params.get("eta", 1.0))
            elif family == "linear":
                inner = LinearBetting(h)
            elif family == "aggressive":
                inner = AggressiveBetting(h, eps=params.get("eps", 0.01))
            else:
                raise ValueError(f"unsupported leaf betting family {family!r}")
            out.append(Participant(beta0, SpecializedBetting(inner, box)))
    return out
