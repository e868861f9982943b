"""Natures: processes that emit conditional probabilities p*_t and outcomes.

A nature is described by a :class:`NatureSpec` (plain, JSON-friendly) and
run through a :class:`NatureState`, which holds the realized history and
any construction-specific bookkeeping.  Each step is

    pstar = state.next_pstar(rng)
    x = sample_outcome(pstar, rng_outcome, state)

Outcomes are always drawn as ``u < pstar`` with ``u = rng.random()``, so a
whole path of an outcome-independent nature can be sampled in one
vectorized call and still match the step-by-step loop draw for draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "NatureSpec",
    "NatureState",
    "HorizonExhausted",
    "sample_outcome",
    "make_product",
    "make_binary_search",
    "make_smoothed_hedging",
    "make_epoch_binary_search",
    "make_smoothed_product",
    "make_nature",
    "product_preset",
    "epoch_count",
    "NATURE_KINDS",
]


class HorizonExhausted(RuntimeError):
    """Raised when a nature is asked for more than T steps."""


@dataclass(frozen=True)
class NatureSpec:
    """Declarative description of a nature.

    ``params`` holds the kind-specific values (``epsilon``, ``c``,
    ``pstar``, ``preset``, ``base``).  Serializes to
    ``{"kind": ..., "T": ..., **params}``.
    """

    kind: str
    T: int
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "NatureSpec":
        if not isinstance(d, dict):
            raise ValueError("nature spec must be a JSON object")
        if "kind" not in d:
            raise ValueError("nature spec needs 'kind'")
        params = {k: v for k, v in d.items() if k not in ("kind", "T")}
        T = d.get("T")
        if T is None and isinstance(params.get("pstar"), list):
            T = len(params["pstar"])
        if T is None:
            raise ValueError("nature spec needs 'T'")
        if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
            raise ValueError(f"T must be a positive integer (got {T!r})")
        return cls(str(d["kind"]), int(T), params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T, **self.params}

    def with_T(self, T: int) -> "NatureSpec":
        return NatureSpec(self.kind, int(T), dict(self.params))

    def build(self) -> "NatureState":
        return make_nature(self)


def sample_outcome(pstar, rng: np.random.Generator, state: Optional["NatureState"] = None) -> int:
    """Draw x ~ Bern(pstar) as ``rng.random() < pstar``; record it in ``state``."""
    if not 0 <= pstar <= 1:
        raise ValueError(f"pstar must lie in [0, 1] (got {pstar})")
    x = 1 if rng.random() < pstar else 0
    if state is not None:
        state.observe(x)
    return x


class NatureState:
    """Per-episode state of a nature.

    Subclasses implement ``_draw(rng)`` and optionally ``_after(x)``.
    Natures whose p* law ignores the outcomes set ``oblivious = True`` and
    provide ``_path(rng)``, the vectorized equivalent of T calls to
    ``_draw``.
    """

    kind = "abstract"
    oblivious = False
    smoothing: Optional[float] = None

    def __init__(self, T: int):
        if T < 1:
            raise ValueError("T must be positive")
        self.T = int(T)
        self.t = 0
        self.history: list = []
        self._pending = None

    def next_pstar(self, rng: np.random.Generator):
        if self.t >= self.T:
            raise HorizonExhausted(f"nature horizon T={self.T} exhausted")
        if self._pending is not None:
            raise RuntimeError("previous pstar has no outcome yet")
        self._pending = self._draw(rng)
        return self._pending

    def observe(self, x: int) -> None:
        if self._pending is None:
            raise RuntimeError("observe() called before next_pstar()")
        self.history.append(int(x))
        self.t += 1
        self._pending = None
        self._after(int(x))

    def pstar_path(self, rng: np.random.Generator) -> np.ndarray:
        """All T values at once (outcome-independent natures only)."""
        if not self.oblivious:
            raise TypeError(f"{self.kind} nature depends on outcomes")
        return self._path(rng)

    def _draw(self, rng):
        raise NotImplementedError

    def _after(self, x: int) -> None:
        pass

    def _path(self, rng):
        raise NotImplementedError


def _uniform(rng, lo, hi, size=None):
    # lo + w*u in both scalar and vector form so the two agree bit for bit
    if size is None:
        return lo + (hi - lo) * rng.random()
    return lo + (hi - lo) * rng.random(size)


# ---------------------------------------------------------------------------
# product natures


class ProductNature(NatureState):
    kind = "product"
    oblivious = True

    def __init__(self, pstar: Sequence[float]):
        v = np.asarray(pstar, dtype=np.float64).reshape(-1)
        if v.size == 0:
            raise ValueError("pstar vector must be non-empty")
        if not np.all((v >= 0) & (v <= 1)):
            raise ValueError("pstar entries must lie in [0, 1]")
        super().__init__(v.size)
        self.vector = v

    def _draw(self, rng):
        return float(self.vector[self.t])

    def _path(self, rng):
        return self.vector.copy()


def product_preset(name: str, T: int) -> np.ndarray:
    """Named p* vectors: ``hedging_fifths`` and ``constant_half``."""
    if name == "hedging_fifths":
        if T % 2:
            raise ValueError("hedging_fifths preset needs even T")
        return np.concatenate([np.full(T // 2, 0.2), np.full(T // 2, 0.8)])
    if name == "constant_half":
        return np.full(T, 0.5)
    raise ValueError(f"unknown product preset {name!r}")


def make_product(pstar=None, T: Optional[int] = None, preset: Optional[str] = None) -> ProductNature:
    """Independent outcomes with fixed probabilities.

    Give either an explicit ``pstar`` vector, a scalar ``pstar`` with ``T``
    (i.i.d. Bernoulli), or a ``preset`` name with ``T``.
    """
    if preset is not None:
        if T is None:
            raise ValueError("preset needs T")
        return ProductNature(product_preset(preset, T))
    if pstar is None:
        raise ValueError("product nature needs 'pstar' or 'preset'")
    if np.ndim(pstar) == 0:
        if T is None:
            raise ValueError("scalar pstar needs T")
        return ProductNature(np.full(T, float(pstar)))
    v = np.asarray(pstar, dtype=np.float64)
    if T is not None and v.size != T:
        raise ValueError(f"pstar has length {v.size}, expected T={T}")
    return ProductNature(v)


class SmoothedProductNature(NatureState):
    """p*_t uniform on a width-c window around base_t, shifted to fit [0, 1]."""

    kind = "smoothed_product"
    oblivious = True

    def __init__(self, c: float, base: Sequence[float]):
        b = np.asarray(base, dtype=np.float64).reshape(-1)
        if not 0 < c <= 1:
            raise ValueError("c must lie in (0, 1]")
        if not np.all((b >= 0) & (b <= 1)):
            raise ValueError("base entries must lie in [0, 1]")
        super().__init__(b.size)
        self.smoothing = float(c)
        self.lo = np.clip(b - c / 2, 0.0, 1.0 - c)
        self.hi = self.lo + c

    def _draw(self, rng):
        return float(_uniform(rng, self.lo[self.t], self.hi[self.t]))

    def _path(self, rng):
        return _uniform(rng, self.lo, self.hi, self.T)


def make_smoothed_product(c: float, T: int, base=0.5) -> SmoothedProductNature:
    """c-smoothed product nature; ``base`` is a scalar, vector or preset name."""
    if isinstance(base, str):
        b = product_preset(base, T)
    elif np.ndim(base) == 0:
        b = np.full(T, float(base))
    else:
        b = np.asarray(base, dtype=np.float64)
        if b.size != T:
            raise ValueError(f"base has length {b.size}, expected T={T}")
    return SmoothedProductNature(c, b)


class SmoothedHedgingNature(NatureState):
    kind = "smoothed_hedging"
    oblivious = True

    def __init__(self, c: float, T: int):
        if not 0 < c < 0.2:
            raise ValueError(f"c must lie in (0, 1/5) (got {c})")
        if T % 2:
            raise ValueError(f"smoothed hedging nature needs even T (got {T})")
        super().__init__(T)
        self.smoothing = 2.0 * c
        self.c = float(c)

    def _center(self, t):
        return 0.2 if t < self.T // 2 else 0.8

    def _draw(self, rng):
        m = self._center(self.t)
        return float(_uniform(rng, m - self.c, m + self.c))

    def _path(self, rng):
        h = self.T // 2
        centers = np.concatenate([np.full(h, 0.2), np.full(h, 0.8)])
        return _uniform(rng, centers - self.c, centers + self.c, self.T)


def make_smoothed_hedging(c: float, T: int) -> SmoothedHedgingNature:
    """First half uniform on [0.2 - c, 0.2 + c], second half on [0.8 - c, 0.8 + c]."""
    return SmoothedHedgingNature(c, T)


# ---------------------------------------------------------------------------
# outcome-dependent natures


class BinarySearchNature(NatureState):
    """p*_{t+1} = p*_t + eps/2^t after x_t = 1, minus after x_t = 0.

    Values are exact :class:`~fractions.Fraction` objects; in floating point
    the step eps/2^t stops changing p* after about fifty steps.
    """

    kind = "binary_search"

    def __init__(self, epsilon: float, T: int):
        if not 0 < epsilon < 0.25:
            raise ValueError(f"epsilon must lie in (0, 1/4) (got {epsilon})")
        super().__init__(T)
        self.epsilon = Fraction(epsilon)
        self.current = Fraction(1, 2)

    def _draw(self, rng):
        return self.current

    def _after(self, x):
        # self.t is the 1-based index of the step just finished
        step = self.epsilon / (1 << self.t)
        self.current = self.current + step if x == 1 else self.current - step

    @property
    def alpha_star(self) -> Fraction:
        """p*_{T+1}, the threshold separating 1-outcomes from 0-outcomes."""
        if self.t < self.T:
            raise RuntimeError("alpha* is defined once all T steps are played")
        return self.current


def make_binary_search(epsilon: Optional[float], T: int) -> BinarySearchNature:
    """Binary-search nature; ``epsilon=None`` uses 1/(4 sqrt(T))."""
    if epsilon is None:
        epsilon = 1.0 / (4.0 * math.sqrt(T))
    return BinarySearchNature(epsilon, T)


def epoch_count(c: float) -> int:
    """floor(log2(1/(8c))), computed without rounding trouble at powers of 2."""
    if not 0 < c <= 1 / 16:
        raise ValueError(f"c must lie in (0, 1/16] (got {c})")
    r = Fraction(1) / (8 * Fraction(c))
    k = r.numerator.bit_length() - r.denominator.bit_length()
    # now 2^k is within a factor 2 of r; adjust to the exact floor
    while Fraction(2) ** k > r:
        k -= 1
    while Fraction(2) ** (k + 1) <= r:
        k += 1
    return k


class EpochBinarySearchNature(NatureState):
    """Smoothed binary search over k short epochs, then a long two-part epoch."""

    kind = "epoch"

    def __init__(self, c: float, T: int):
        k = epoch_count(c)
        if T % (5 * k):
            raise ValueError(f"epoch nature with c={c} needs T divisible by {5 * k} (got {T})")
        super().__init__(T)
        self.c = float(c)
        self.smoothing = float(c)
        self.k = k
        self.epoch_len = T // (5 * k)
        self.w = [0.5]
        self._sum = 0

    def epoch_of(self, t: int) -> int:
        """1-based epoch index of 0-based step t; k + 1 is the long epoch."""
        if t < self.T // 5:
            return t // self.epoch_len + 1
        return self.k + 1

    def _draw(self, rng):
        t = self.t
        i = self.epoch_of(t)
        if i <= self.k:
            w = self.w[i - 1]
            return float(_uniform(rng, w - self.c / 2, w + self.c / 2))
        if t < 3 * self.T // 5:
            return float(_uniform(rng, 0.0, self.c))
        return float(_uniform(rng, 1.0 - self.c, 1.0))

    def _after(self, x):
        t = self.t - 1
        i = self.epoch_of(t)
        if i > self.k:
            return
        self._sum += x
        if (t + 1) % self.epoch_len == 0:
            mu = self._sum / self.epoch_len
            prev = self.w[-1]
            step = 1.0 / 2 ** (i + 3)  # moving into epoch i + 1
            self.w.append(prev + step if mu >= prev else prev - step)
            self._sum = 0

    @property
    def alpha_star(self) -> float:
        """w_{k+1}, available once the short epochs are complete."""
        if len(self.w) <= self.k:
            raise RuntimeError("alpha* is defined after the first k epochs")
        return self.w[self.k]


def make_epoch_binary_search(c: float, T: int) -> EpochBinarySearchNature:
    return EpochBinarySearchNature(c, T)


# ---------------------------------------------------------------------------


NATURE_KINDS = ("product", "binary_search", "smoothed_hedging", "epoch", "smoothed_product")


def make_nature(spec) -> NatureState:
    """Build a fresh :class:`NatureState` from a spec or its dict form."""
    if isinstance(spec, dict):
        spec = NatureSpec.from_dict(spec)
    P = dict(spec.params)
    kind = spec.kind
    try:
        if kind == "product":
            return make_product(P.get("pstar"), spec.T, P.get("preset"))
        if kind == "binary_search":
            return make_binary_search(P.get("epsilon"), spec.T)
        if kind == "smoothed_hedging":
            return make_smoothed_hedging(float(P.get("c", 0.1)), spec.T)
        if kind == "epoch":
            return make_epoch_binary_search(float(P.get("c", 1 / 64)), spec.T)
        if kind == "smoothed_product":
            return make_smoothed_product(float(P["c"]), spec.T, P.get("base", 0.5))
    except KeyError as e:
        raise ValueError(f"{kind} nature needs parameter {e.args[0]!r}") from None
    except TypeError as e:
        raise ValueError(f"bad parameter for {kind} nature: {e}") from None
    raise ValueError(f"unknown nature kind {kind!r}; choose from {', '.join(NATURE_KINDS)}")
