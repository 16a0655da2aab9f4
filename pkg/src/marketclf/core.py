"""Core market machinery: participants, budgets, bets, and the budget update.

A market is an ordered collection of participants, each a (budget, betting
function) pair over K outcome classes.  Given an instance x and a price
vector c on the K-simplex, every participant allocates fractions of its
budget to per-class contracts; the budget update then charges each
participant its stake and pays 1/c_y per unit staked on the realized class.
At the equilibrium price the total budget is conserved for every outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

# Budgets below this collapse to exactly 0: numerically dead participants
# stay inert instead of accumulating denormal noise.
BUDGET_FLOOR = 1e-15

# Relative drift of the budget sum that triggers renormalization back to the
# conserved total.  Conservation holds analytically at equilibrium prices;
# this only bounds accumulated float error over long training runs.
CONSERVATION_DRIFT = 1e-12

PRICE_SUM_TOL = 1e-9

# Price-dependence shapes a betting function can declare for the solvers.
# Each describes the per-class fraction as a function of that class's own
# price ck, given a coefficient row `base` (one entry per class):
#   KIND_CONSTANT    phi_k = base_k
#   KIND_LINEAR      phi_k = base_k * (1 - ck)
#   KIND_AGGRESSIVE  phi_k = base_k, 0, or base_k*(base_k+eps-ck)/eps
#   KIND_LOGISTIC    phi_k = clip(ck * (base_k - ln(ck) * aux), 0, 1)
# The `aux` slot carries eps for aggressive rows and 1/B for logistic rows.
KIND_CONSTANT = 0
KIND_LINEAR = 1
KIND_AGGRESSIVE = 2
KIND_LOGISTIC = 3


class MarketError(Exception):
    """Base class for market failures."""


class RejectedInstance(MarketError):
    """No participant bets on the instance; the market abstains."""


class NoRootError(MarketError):
    """The price equations have no root for this market and instance."""


class NonConvergenceError(MarketError):
    """An iterative solver hit its iteration cap before its tolerance."""


def validate_instance(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"instance must be a 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("instance contains non-finite entries")
    return x


def validate_price(c, class_count: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (class_count,):
        raise ValueError(f"price vector must have shape ({class_count},)")
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("prices must lie in [0, 1]")
    if abs(c.sum() - 1.0) > PRICE_SUM_TOL:
        raise ValueError(f"prices must sum to 1, got {c.sum()!r}")
    return c


def validate_allocation(phi, total_cap: float | None = 1.0) -> np.ndarray:
    """Check a bet-fraction vector: entries in [0,1], total at most the cap.

    `total_cap=None` skips the sum check (the logistic family can stake more
    than one unit in aggregate; see `betting.LogisticBetting`).
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < -1e-12) or np.any(phi > 1 + 1e-12):
        raise ValueError("bet fractions must lie in [0, 1]")
    if total_cap is not None and phi.sum() > total_cap + 1e-12:
        raise ValueError(f"total bet {phi.sum()!r} exceeds {total_cap}")
    return phi


@dataclass
class Participant:
    """A budget paired with a betting function."""

    budget: float
    bettor: object

    def __post_init__(self):
        if not self.budget >= 0:
            raise ValueError(f"budget must be nonnegative, got {self.budget}")


class BetProfile:
    """Price dependence of all active bets at one instance, in array form.

    Rows correspond to the active participants (those whose betting function
    can stake something at this instance); columns to classes.  Solvers only
    ever talk to this object, so evaluating a candidate price is a handful of
    vectorized operations regardless of how participants are implemented.
    """

    __slots__ = ("kinds", "base", "aux", "budgets", "active", "_single_kind")

    def __init__(self, kinds, base, aux, budgets, active):
        self.kinds = kinds
        self.base = base
        self.aux = aux
        self.budgets = budgets
        self.active = active
        u = np.unique(kinds)
        self._single_kind = int(u[0]) if u.size == 1 else (KIND_CONSTANT if u.size == 0 else -1)

    @property
    def size(self) -> int:
        return self.budgets.size

    def phi(self, c: np.ndarray) -> np.ndarray:
        """Bet-fraction matrix (rows: active participants, cols: classes)."""
        if self._single_kind == KIND_CONSTANT:
            return self.base
        return _kernels.phi_matrix(self.kinds, self.base, self.aux, c)

    def class_bets(self, c: np.ndarray) -> np.ndarray:
        """Per-class money staked, sum_m beta_m phi_m^k, as a K-vector."""
        return _kernels.class_bets(self.kinds, self.base, self.aux, self.budgets, c)

    def total_bet(self, c: np.ndarray) -> float:
        return float(self.class_bets(c).sum())

    def price_independent(self) -> bool:
        return self._single_kind == KIND_CONSTANT


class Market:
    """Ordered participants with a conserved total budget over K classes.

    Mutated only by the budget-update methods, which are sequential; price
    solving and bet evaluation are read-only and safe to run concurrently on
    a snapshot (one writer or many readers, never both).
    """

    def __init__(self, participants, class_count: int):
        participants = list(participants)
        if class_count < 2:
            raise ValueError("a market needs at least two classes")
        if not participants:
            raise ValueError("a market needs at least one participant")
        self.class_count = class_count
        self.bettors = []
        budgets = []
        for p in participants:
            if isinstance(p, Participant):
                budgets.append(p.budget)
                self.bettors.append(p.bettor)
            else:  # (budget, bettor) pair
                b, f = p
                budgets.append(float(b))
                self.bettors.append(f)
        self._budgets = np.asarray(budgets, dtype=float)
        if np.any(self._budgets < 0):
            raise ValueError("budgets must be nonnegative")
        self.total_budget = float(self._budgets.sum())
        self._budget_sum = self.total_budget
        self.last_raw_budget_sum = self.total_budget
        self._index = None

    # -- introspection -------------------------------------------------

    def __len__(self) -> int:
        return self._budgets.size

    @property
    def budgets(self) -> np.ndarray:
        """Budget vector (a view; treat as read-only)."""
        return self._budgets

    @property
    def participants(self):
        return [Participant(float(b), f) for b, f in zip(self._budgets, self.bettors)]

    def set_budgets(self, budgets) -> None:
        budgets = np.asarray(budgets, dtype=float)
        if budgets.shape != self._budgets.shape:
            raise ValueError("budget vector has wrong length")
        if np.any(budgets < 0):
            raise ValueError("budgets must be nonnegative")
        self._budgets = budgets.copy()
        self.total_budget = float(budgets.sum())
        self._budget_sum = self.total_budget
        self.last_raw_budget_sum = self.total_budget

    def copy(self) -> "Market":
        clone = Market.__new__(Market)
        clone.class_count = self.class_count
        clone.bettors = self.bettors
        clone._budgets = self._budgets.copy()
        clone.total_budget = self.total_budget
        clone._budget_sum = self._budget_sum
        clone.last_raw_budget_sum = self.last_raw_budget_sum
        clone._index = self._index
        return clone

    # -- bet evaluation ------------------------------------------------

    def _build_index(self):
        """Group participants by domain kind for vectorized activity tests."""
        box_rows, box_lo, box_hi = [], [], []
        half_rows, half_w, half_b = [], [], []
        always = []
        for i, f in enumerate(self.bettors):
            dom = getattr(f, "domain", None)
            if dom is None:
                always.append(i)
            elif hasattr(dom, "lows"):
                box_rows.append(i)
                box_lo.append(dom.lows)
                box_hi.append(dom.highs)
            else:
                half_rows.append(i)
                half_w.append(dom.weights)
                half_b.append(dom.offset)
        self._index = {
            "always": np.asarray(always, dtype=np.intp),
            "box_rows": np.asarray(box_rows, dtype=np.intp),
            "box_lo": np.asarray(box_lo, dtype=float) if box_rows else None,
            "box_hi": np.asarray(box_hi, dtype=float) if box_rows else None,
            "half_rows": np.asarray(half_rows, dtype=np.intp),
            "half_w": np.asarray(half_w, dtype=float) if half_rows else None,
            "half_b": np.asarray(half_b, dtype=float) if half_rows else None,
            "static": None,
        }

    def active_indices(self, x: np.ndarray) -> np.ndarray:
        """Participants whose betting function can stake at x, in order."""
        if self._index is None:
            self._build_index()
        idx = self._index
        parts = [idx["always"]]
        if idx["box_rows"].size:
            ok = np.all((x >= idx["box_lo"]) & (x < idx["box_hi"]), axis=1)
            parts.append(idx["box_rows"][ok])
        if idx["half_rows"].size:
            ok = idx["half_w"] @ x + idx["half_b"] >= 0.0
            parts.append(idx["half_rows"][ok])
        active = np.concatenate(parts)
        active.sort()
        return active

    def _static_entries(self):
        if self._index is None:
            self._build_index()
        if self._index["static"] is None:
            m, k = len(self.bettors), self.class_count
            kinds = np.zeros(m, dtype=np.int8)
            base = np.zeros((m, k), dtype=float)
            aux = np.zeros(m, dtype=float)
            dynamic = []
            for i, f in enumerate(self.bettors):
                entry = f.static_entry(k)
                if entry is None:
                    dynamic.append(i)
                else:
                    kinds[i], base[i], aux[i] = entry
            self._index["static"] = (kinds, base, aux, np.asarray(dynamic, dtype=np.intp))
        return self._index["static"]

    def profile(self, x: np.ndarray) -> BetProfile:
        """Compile the active bets at x into solver-ready arrays."""
        kinds, base, aux, dynamic = self._static_entries()
        active = self.active_indices(x)
        k_act, b_act, a_act = kinds[active], base[active], aux[active]
        if dynamic.size:
            dyn = np.intersect1d(dynamic, active)
            pos = np.searchsorted(active, dyn)
            for p, i in zip(pos, dyn):
                k_act[p], b_act[p], a_act[p] = self.bettors[i].solver_entry(
                    x, self.class_count
                )
        return BetProfile(k_act, b_act, a_act, self._budgets[active], active)

    def bet_matrix(self, x, c) -> np.ndarray:
        """Full M-by-K matrix of bet fractions (zero rows for non-bettors)."""
        x = validate_instance(x)
        c = np.asarray(c, dtype=float)
        prof = self.profile(x)
        phi = np.zeros((len(self), self.class_count))
        phi[prof.active] = prof.phi(c)
        return phi

    def total_bet(self, x, c) -> float:
        """Total money staked at price c: sum over participants and classes."""
        x = validate_instance(x)
        c = validate_price(c, self.class_count)
        return self.profile(x).total_bet(c)

    # -- budget dynamics -------------------------------------------------

    def budget_update(self, x, y: int, c) -> None:
        """Settle one outcome: charge all stakes, pay 1/c_y per unit on y.

        `c` must be the equilibrium price for this market at x (caller's
        responsibility); only then is the total budget conserved.
        """
        x = validate_instance(x)
        c = validate_price(c, self.class_count)
        cy = c[y - 1]
        if cy <= 0:
            raise MarketError(f"price of realized class {y} is {cy}; update undefined")
        prof = self.profile(x)
        phi = prof.phi(c)
        factor = 1.0 - phi.sum(axis=1) + phi[:, y - 1] / cy
        self.apply_budget_factors(prof.active, factor)

    def ml_update(self, x, y: int, c, eta: float, weight: float = 1.0) -> None:
        """Likelihood-ascent step: the budget update damped by eta/B(x,c).

        With weight w the effective rate is eta*w, which maximizes the
        w-weighted log-likelihood for constant bettors.
        """
        x = validate_instance(x)
        c = validate_price(c, self.class_count)
        cy = c[y - 1]
        if cy <= 0:
            raise MarketError(f"price of realized class {y} is {cy}; update undefined")
        prof = self.profile(x)
        phi = prof.phi(c)
        total = float(prof.budgets @ phi.sum(axis=1))
        if total <= 0:
            raise RejectedInstance("no bets placed; likelihood step undefined")
        step = eta * weight / total
        factor = 1.0 + step * (phi[:, y - 1] / cy - phi.sum(axis=1))
        self.apply_budget_factors(prof.active, factor)

    def apply_budget_factors(self, active: np.ndarray, factor: np.ndarray) -> None:
        """Multiply the budgets at `active` by `factor`, then enforce the
        nonnegativity, floor, and conservation contracts."""
        new = self._budgets[active] * factor
        if new.size and new.min() < -1e-12:
            raise MarketError(
                "negative budget after update; a betting function staked "
                "more than its budget"
            )
        np.clip(new, 0.0, None, out=new)
        new[new < BUDGET_FLOOR] = 0.0
        old_sum = float(self._budgets[active].sum())
        self._budgets[active] = new
        self._budget_sum += float(new.sum()) - old_sum
        # Raw sum before any renormalization: what the update itself did to
        # the total, which is what conservation tests must look at.
        self.last_raw_budget_sum = self._budget_sum
        if abs(self._budget_sum - self.total_budget) > CONSERVATION_DRIFT * self.total_budget:
            exact = float(self._budgets.sum())
            self.last_raw_budget_sum = exact
            if abs(exact - self.total_budget) > CONSERVATION_DRIFT * self.total_budget:
                self._budgets *= self.total_budget / exact
            self._budget_sum = self.total_budget

    def budget_sum(self) -> float:
        return float(self._budgets.sum())
