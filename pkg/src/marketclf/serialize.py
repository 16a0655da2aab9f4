"""Lossless serialization of markets, betting functions, and forests.

Betting functions serialize to a compact descriptor string:

    constant(eta;h1,...,hK)
    linear(h1,...,hK)
    aggressive(eps;h1,...,hK)
    logistic(feature_index)
    kernel(cosine,ref_id) | kernel(rbf:sigma,ref_id)
    specialized(domain,inner)

where domain is either a list of per-feature interval triples
[(feature,low,high),...] (with `inf` for unbounded sides) or
halfplane(w1,...,wF,b).  Kernel reference instances live in a references
table of the enclosing market document, keyed by ref_id.

Floats are written with repr(), which round-trips float64 exactly.  The
market document is a flat versioned JSON object; a logistic bettor's total
budget is recovered from the document's budget sum, which the update rules
conserve.
"""

from __future__ import annotations

import json

import numpy as np

from .betting import (
    AggressiveBetting,
    BoxDomain,
    ConstantBetting,
    HalfPlaneDomain,
    KernelBetting,
    LinearBetting,
    LogisticBetting,
    SpecializedBetting,
)
from .core import Market, Participant
from .forest import RandomTree, TreeNode

MARKET_FORMAT = "marketclf.market/1"
FOREST_FORMAT = "marketclf.forest/1"


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_vec(v) -> str:
    return ",".join(_fmt(x) for x in v)


class DescriptorError(ValueError):
    pass


# -- formatting ----------------------------------------------------------


def format_bettor(bettor, refs: dict | None = None) -> str:
    """Descriptor string; kernel references are appended to `refs`."""
    if isinstance(bettor, ConstantBetting):
        if callable(bettor.h):
            raise DescriptorError("cannot serialize a callable classifier")
        return f"constant({_fmt(bettor.eta)};{_fmt_vec(bettor.h)})"
    if isinstance(bettor, LinearBetting):
        if callable(bettor.h):
            raise DescriptorError("cannot serialize a callable classifier")
        return f"linear({_fmt_vec(bettor.h)})"
    if isinstance(bettor, AggressiveBetting):
        if callable(bettor.h):
            raise DescriptorError("cannot serialize a callable classifier")
        return f"aggressive({_fmt(bettor.eps)};{_fmt_vec(bettor.h)})"
    if isinstance(bettor, LogisticBetting):
        return f"logistic({bettor.feature_index})"
    if isinstance(bettor, KernelBetting):
        if refs is None:
            raise DescriptorError("kernel bettors need a references table")
        ref_id = f"r{len(refs)}"
        refs[ref_id] = {"x": [float(v) for v in bettor.ref_x], "y": bettor.ref_y}
        spec = "cosine" if bettor.kernel == "cosine" else f"rbf:{_fmt(bettor.sigma)}"
        return f"kernel({spec},{ref_id})"
    if isinstance(bettor, SpecializedBetting):
        dom = _format_domain(bettor.domain)
        return f"specialized({dom},{format_bettor(bettor.inner, refs)})"
    raise DescriptorError(f"no descriptor for {type(bettor).__name__}")


def _format_domain(dom) -> str:
    if isinstance(dom, BoxDomain):
        inner = ",".join(f"({f},{_fmt(lo)},{_fmt(hi)})" for f, lo, hi in dom.triples())
        return f"[{inner}]"
    if isinstance(dom, HalfPlaneDomain):
        return f"halfplane({_fmt_vec(dom.weights)},{_fmt(dom.offset)})"
    raise DescriptorError(f"no descriptor for domain {type(dom).__name__}")


# -- parsing -------------------------------------------------------------


def _split_top(text: str) -> list[str]:
    """Split on commas not nested inside (), []."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _head_body(text: str):
    text = text.strip()
    if not text.endswith(")"):
        raise DescriptorError(f"malformed descriptor {text!r}")
    head, _, rest = text.partition("(")
    return head.strip(), rest[:-1]


def parse_bettor(text: str, refs: dict | None = None,
                 total_budget: float | None = None,
                 feature_count: int | None = None):
    text = text.strip()
    head, body = _head_body(text)
    if head == "constant":
        eta, hs = body.split(";")
        return ConstantBetting([float(v) for v in hs.split(",")], eta=float(eta))
    if head == "linear":
        return LinearBetting([float(v) for v in body.split(",")])
    if head == "aggressive":
        eps, hs = body.split(";")
        return AggressiveBetting([float(v) for v in hs.split(",")], eps=float(eps))
    if head == "logistic":
        if total_budget is None:
            raise DescriptorError("logistic bettors need the market's budget sum")
        return LogisticBetting(int(body), total_budget)
    if head == "kernel":
        spec, ref_id = _split_top(body)
        if refs is None or ref_id not in refs:
            raise DescriptorError(f"unknown kernel reference {ref_id!r}")
        ref = refs[ref_id]
        kernel = "cosine" if spec == "cosine" else ("rbf", float(spec.split(":")[1]))
        return KernelBetting(np.asarray(ref["x"], dtype=float), int(ref["y"]), kernel)
    if head == "specialized":
        dom_text, inner_text = _split_top(body)
        dom = _parse_domain(dom_text, feature_count)
        inner = parse_bettor(inner_text, refs, total_budget, feature_count)
        return SpecializedBetting(inner, dom)
    raise DescriptorError(f"unknown betting family {head!r}")


def _parse_domain(text: str, feature_count: int | None):
    text = text.strip()
    if text.startswith("["):
        triples = []
        body = text[1:-1].strip()
        if body:
            for item in _split_top(body):
                item = item.strip()
                f, lo, hi = _split_top(item[1:-1])
                triples.append((int(f), float(lo), float(hi)))
        if feature_count is None:
            feature_count = max((f for f, _, _ in triples), default=0) + 1
        return BoxDomain.from_triples(feature_count, triples)
    head, body = _head_body(text)
    if head != "halfplane":
        raise DescriptorError(f"unknown domain {head!r}")
    vals = [float(v) for v in body.split(",")]
    return HalfPlaneDomain(vals[:-1], vals[-1])


# -- market documents ----------------------------------------------------


def market_to_doc(market: Market) -> dict:
    refs: dict = {}
    participants = [
        {"budget": float(b), "bettor": format_bettor(f, refs)}
        for b, f in zip(market.budgets, market.bettors)
    ]
    doc = {
        "format": MARKET_FORMAT,
        "class_count": market.class_count,
        "total_budget": float(market.total_budget),
        "participants": participants,
    }
    if refs:
        doc["references"] = refs
    return doc


def market_from_doc(doc: dict, feature_count: int | None = None) -> Market:
    if doc.get("format") != MARKET_FORMAT:
        raise DescriptorError(f"not a market document: {doc.get('format')!r}")
    refs = doc.get("references", {})
    total = float(doc["total_budget"])
    participants = [
        Participant(
            float(p["budget"]),
            parse_bettor(p["bettor"], refs, total, feature_count),
        )
        for p in doc["participants"]
    ]
    return Market(participants, int(doc["class_count"]))


def save_market(market: Market, path) -> None:
    with open(path, "w") as fh:
        json.dump(market_to_doc(market), fh, indent=1)


def load_market(path, feature_count: int | None = None) -> Market:
    with open(path) as fh:
        return market_from_doc(json.load(fh), feature_count)


# -- forest documents ----------------------------------------------------


def _preorder(node: TreeNode, out: list) -> None:
    if node.is_leaf:
        out.append({"n": [float(v) for v in node.counts]})
    else:
        out.append({"f": node.feature, "t": float(node.threshold)})
        _preorder(node.left, out)
        _preorder(node.right, out)


def forest_to_doc(forest) -> dict:
    trees = []
    for tree in forest:
        nodes: list = []
        _preorder(tree.root, nodes)
        trees.append(nodes)
    return {
        "format": FOREST_FORMAT,
        "class_count": forest[0].class_count,
        "feature_count": forest[0].feature_count,
        "trees": trees,
    }


def forest_from_doc(doc: dict):
    if doc.get("format") != FOREST_FORMAT:
        raise DescriptorError(f"not a forest document: {doc.get('format')!r}")
    K = int(doc["class_count"])
    F = int(doc["feature_count"])
    forest = []
    for nodes in doc["trees"]:
        pos = 0
        leaves: list = []

        def build(lows, highs):
            nonlocal pos
            spec = nodes[pos]
            pos += 1
            if "n" in spec:
                node = TreeNode(counts=np.asarray(spec["n"], dtype=float))
                leaves.append((node, BoxDomain(lows, highs)))
                return node
            node = TreeNode(feature=int(spec["f"]), threshold=float(spec["t"]))
            l_highs = highs.copy()
            l_highs[node.feature] = min(l_highs[node.feature], node.threshold)
            node.left = build(lows.copy(), l_highs)
            r_lows = lows.copy()
            r_lows[node.feature] = max(r_lows[node.feature], node.threshold)
            node.right = build(r_lows, highs.copy())
            return node

        root = build(np.full(F, -np.inf), np.full(F, np.inf))
        forest.append(RandomTree(root, K, F, leaves))
    return forest


def save_forest(forest, path) -> None:
    with open(path, "w") as fh:
        json.dump(forest_to_doc(forest), fh)


def load_forest(path):
    with open(path) as fh:
        return forest_from_doc(json.load(fh))
