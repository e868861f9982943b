"""Forecasters: maps from (history, revealed p*_t) to a prediction p_t.

Every forecaster is created for a known horizon T and then driven by

    p = f.predict(t, pstar, rng)     # t is 0-based
    f.observe(x, p)

Forecasters whose prediction depends only on (t, pstar) set
``memoryless = True`` and implement ``predict_path`` for whole episodes.
The Hedge forecaster's three steps are also exposed as plain functions
(:func:`hedge_step_init`, :func:`hedge_step_predict`,
:func:`hedge_step_update`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ForecasterSpec",
    "Forecaster",
    "Truthful",
    "Constant",
    "HedgingFifths",
    "Patching",
    "HedgeStep",
    "HedgeState",
    "hedge_step_init",
    "hedge_step_predict",
    "hedge_step_update",
    "hedge_split",
    "make_forecaster",
    "FORECASTER_KINDS",
]

SIGN_TOL = 1e-12


@dataclass(frozen=True)
class ForecasterSpec:
    """``{"kind": ..., "level"?, "k"?, "eta"?, "c"?}`` as a frozen record."""

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ForecasterSpec":
        if not isinstance(d, dict) or "kind" not in d:
            raise ValueError("forecaster spec must be an object with 'kind'")
        return cls(str(d["kind"]), {k: v for k, v in d.items() if k != "kind"})

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def build(self, T: int, nature=None) -> "Forecaster":
        return make_forecaster(self, T, nature)


class Forecaster:
    kind = "abstract"
    memoryless = False

    def __init__(self, T: int):
        self.T = int(T)

    def predict(self, t: int, pstar, rng: np.random.Generator):
        raise NotImplementedError

    def observe(self, x: int, p) -> None:
        pass

    def predict_path(self, pstar: np.ndarray) -> np.ndarray:
        raise TypeError(f"{self.kind} forecaster is not memoryless")


class Truthful(Forecaster):
    """Reports the revealed p*_t unchanged."""

    kind = "truthful"
    memoryless = True

    def predict(self, t, pstar, rng):
        return pstar

    def predict_path(self, pstar):
        return pstar.copy()


class Constant(Forecaster):
    kind = "constant"
    memoryless = True

    def __init__(self, T: int, level: float = 0.5):
        super().__init__(T)
        if not 0 <= level <= 1:
            raise ValueError(f"constant level must lie in [0, 1] (got {level})")
        self.level = float(level)

    def predict(self, t, pstar, rng):
        return self.level

    def predict_path(self, pstar):
        return np.full(pstar.shape[0], self.level)


class HedgingFifths(Forecaster):
    """0.4 on the first half of the horizon, 0.6 on the second."""

    kind = "hedging_fifths"
    memoryless = True

    def __init__(self, T: int):
        if T % 2:
            raise ValueError(f"hedging_fifths needs even T (got {T})")
        super().__init__(T)

    def predict(self, t, pstar, rng):
        return 0.4 if t < self.T // 2 else 0.6

    def predict_path(self, pstar):
        h = self.T // 2
        return np.concatenate([np.full(h, 0.4), np.full(self.T - h, 0.6)])


class Patching(Forecaster):
    """Strategic forecaster that cancels an early bias at level 1/2.

    Predicts 1/2 on the first T/5 steps and measures the surplus
    ``delta = sum x - T/10``.  The remaining steps use the levels c/2 (on
    (T/5, 3T/5]) and 1 - c/2 (on (3T/5, T]), except that predictions of
    1/2 are inserted on the block whose outcomes push the running surplus
    back toward zero, for as long as it keeps its sign:

    * ``delta < 0``: the tail predicts 1/2 while the surplus is negative,
      then 1 - c/2 for the rest of the episode;
    * ``delta >= 0``: the middle block predicts 1/2 while the surplus is
      positive, then c/2 until 3T/5; the tail predicts 1 - c/2.
    """

    kind = "patching"

    def __init__(self, T: int, c: float):
        if T % 10:
            raise ValueError(f"patching forecaster needs T divisible by 10 (got {T})")
        if not 0 < c < 1:
            raise ValueError("c must lie in (0, 1)")
        super().__init__(T)
        self.c = float(c)
        self.head = T // 5
        self.mid_end = 3 * T // 5
        self.ones = 0
        self.delta: Optional[float] = None
        self.bias = 0.0
        self.patching = True
        self._t = -1

    def predict(self, t, pstar, rng):
        self._t = t
        if t < self.head:
            return 0.5
        if self.delta is None:
            self.delta = self.ones - self.T / 10
            self.bias = self.delta
        in_mid = t < self.mid_end
        if self.delta < 0:
            if in_mid:
                return self.c / 2
            if self.patching and self.bias < 0:
                return 0.5
            self.patching = False
            return 1 - self.c / 2
        if not in_mid:
            return 1 - self.c / 2
        if self.patching and self.bias > 0:
            return 0.5
        self.patching = False
        return self.c / 2

    def observe(self, x, p):
        if self._t < self.head:
            self.ones += x
        elif p == 0.5:
            self.bias += x - 0.5


# ---------------------------------------------------------------------------
# Hedge over signed threshold experts


@dataclass
class HedgeState:
    """Hedge weights over the 2k experts (sigma, i).

    Row 0 of every (2, k) array is sigma = +1, row 1 is sigma = -1; column
    i is the threshold level i/(k-1).  The state stores ``gain``, the
    running sum of sigma 1{p <= i/(k-1)} (x - p); the cumulative cost is
    ``(steps - gain) / 2`` and the weights are proportional to
    ``exp(-eta * cost)``.
    """

    k: int
    T: int
    eta: float
    gain: np.ndarray
    steps: int = 0
    levels: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.levels is None:
            self.levels = np.arange(self.k) / (self.k - 1)

    @property
    def cum_cost(self) -> np.ndarray:
        return (self.steps - self.gain) / 2.0

    @property
    def logw(self) -> np.ndarray:
        """Unnormalized log-weights (the per-step constant is dropped)."""
        return 0.5 * self.eta * self.gain

    @logw.setter
    def logw(self, value) -> None:
        self.gain = 2.0 * np.asarray(value, dtype=np.float64) / self.eta

    @property
    def weights(self) -> np.ndarray:
        lw = self.logw
        w = np.exp(lw - lw.max())
        return w / w.sum()


def hedge_step_init(k: int, T: int, eta: Optional[float] = None) -> HedgeState:
    """Uniform weights; eta defaults to sqrt(8 ln(2k) / T)."""
    if k < 2:
        raise ValueError(f"k must be at least 2 (got {k})")
    if T < 1:
        raise ValueError("T must be positive")
    if eta is None:
        eta = math.sqrt(8.0 * math.log(2 * k) / T)
    return HedgeState(int(k), int(T), float(eta), np.zeros((2, k)))


def hedge_split(C: np.ndarray, tol: float = SIGN_TOL):
    """Choose the level(s) from the expected signs C_j.

    Returns ``(j_low, j_high, q)``: predict level ``j_low`` with
    probability ``q`` and ``j_high`` otherwise.  Deterministic outcomes have
    ``j_low == j_high`` and ``q == 1``.
    """
    k = C.shape[0]
    if C.min() >= -tol:
        return k - 1, k - 1, 1.0
    if C.max() <= tol:
        return 0, 0, 1.0
    prod = C[:-1] * C[1:]
    j = int(np.flatnonzero(prod <= 0)[0])
    a, b = float(C[j]), float(C[j + 1])
    if abs(a) <= tol and abs(b) <= tol:
        q = 1.0
    else:
        q = min(1.0, max(0.0, b / (b - a))) + 0.0
    return j, j + 1, q


def _expected_signs(state: HedgeState) -> np.ndarray:
    w = state.weights
    # C_j = sum over experts with threshold index i >= j of (w(+,i) - w(-,i))
    return np.cumsum((w[0] - w[1])[::-1])[::-1]


def hedge_step_predict(state: HedgeState, rng: np.random.Generator) -> float:
    """Sample a prediction from the at-most-two-point distribution."""
    C = _expected_signs(state)
    lo, hi, q = hedge_split(C)
    levels = state.levels
    if lo == hi or q >= 1.0:
        return float(levels[lo])
    return float(levels[lo] if rng.random() < q else levels[hi])


def hedge_step_update(state: HedgeState, x: int, p: float) -> HedgeState:
    """Multiplicative update with cost (1 - sigma 1{p <= i/(k-1)} (x - p)) / 2.

    The constant 1/2 is shared by every expert and cancels on
    normalization, so only the experts with threshold >= p move.
    """
    levels = state.levels
    j = int(np.searchsorted(levels, p))
    if j >= state.k or levels[j] != p:
        raise ValueError(f"prediction {p} is not one of the {state.k} grid levels")
    r = float(x) - levels[j]
    state.gain[0, j:] += r
    state.gain[1, j:] -= r
    state.steps += 1
    return state


class HedgeStep(Forecaster):
    """Hedge over signed threshold experts on the grid {0, 1/(k-1), ..., 1}."""

    kind = "hedge_step"

    def __init__(self, T: int, k: Optional[int] = None, eta: Optional[float] = None):
        super().__init__(T)
        self.state = hedge_step_init(T if k is None else int(k), T, eta)

    def predict(self, t, pstar, rng):
        return hedge_step_predict(self.state, rng)

    def observe(self, x, p):
        hedge_step_update(self.state, x, p)


FORECASTER_KINDS = ("truthful", "constant", "hedging_fifths", "patching", "hedge_step")


def make_forecaster(spec, T: int, nature=None) -> Forecaster:
    """Build a forecaster for horizon T.

    The patching forecaster takes ``c`` from its own spec or, failing that,
    from the nature it plays against.
    """
    if isinstance(spec, dict):
        spec = ForecasterSpec.from_dict(spec)
    P = spec.params
    kind = spec.kind
    if kind == "truthful":
        return Truthful(T)
    if kind == "constant":
        return Constant(T, float(P.get("level", 0.5)))
    if kind == "hedging_fifths":
        return HedgingFifths(T)
    if kind == "patching":
        c = P.get("c", getattr(nature, "c", None))
        if c is None:
            raise ValueError("patching forecaster needs 'c'")
        return Patching(T, float(c))
    if kind == "hedge_step":
        return HedgeStep(T, P.get("k"), P.get("eta"))
    raise ValueError(
        f"unknown forecaster kind {kind!r}; choose from {', '.join(FORECASTER_KINDS)}"
    )
