"""Calibration measures on finished (outcomes, predictions) pairs.

Every measure here is a pure function of an outcome vector ``x`` in
{0, 1}^T and a prediction vector ``p`` in [0, 1]^T.  Measures defined
through a supremum over thresholds are evaluated exactly: the objectives
are piecewise constant or piecewise linear in the threshold, with breaks
only at the distinct prediction values, so a finite candidate set
suffices.

Prediction levels are grouped by exact equality.  ``p`` may be a float
array or an object array of :class:`fractions.Fraction` (the
binary-search nature emits exact dyadic rationals); grouping and ordering
then use exact comparisons, while the returned values are floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

__all__ = [
    "CapabilityError",
    "MeasureValue",
    "SubsetSampler",
    "step_ce",
    "step_ce_sub",
    "step_ce_sub_exact",
    "vcal",
    "vcal_sub",
    "ucal_bounds",
    "sign_ce",
    "ece",
    "smce",
    "ssce",
    "gamma",
    "MEASURES",
]

STEP_SUB_EXACT_MAX_T = 20
SSCE_EXACT_MAX_T = 16

# rows * T budget for one block of subset masks
_MASK_BLOCK = 1 << 21


class CapabilityError(RuntimeError):
    """Raised when an exact computation is requested beyond its size limit."""


@dataclass(frozen=True)
class MeasureValue:
    """Result of evaluating one calibration measure.

    ``exactness`` is ``"exact"``, ``"monte-carlo"`` or ``"interval"``.
    For intervals ``value`` equals ``lower``.
    """

    value: float
    kind: str
    exactness: str = "exact"
    stderr: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    replicates: Optional[int] = None

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"{self.kind}: negative measure value {self.value}")
        if self.exactness == "interval":
            if self.lower is None or self.upper is None or self.lower > self.upper:
                raise ValueError("interval values need lower <= upper")

    def __float__(self) -> float:
        return float(self.value)


@dataclass
class SubsetSampler:
    """Source of subset masks ``y`` in {0, 1}^T.

    With ``exhaustive=True`` every one of the 2^T subsets is produced once
    and ``m`` is ignored.  Otherwise ``m`` masks are drawn uniformly at
    random from a generator seeded with ``seed``.  A sampler owns its
    generator state and must not be shared between threads.
    """

    m: int = 100
    seed: Optional[int] = None
    exhaustive: bool = False

    def __post_init__(self):
        if not self.exhaustive and self.m < 1:
            raise ValueError("SubsetSampler needs m >= 1")

    def count(self, T: int) -> int:
        return 1 << T if self.exhaustive else self.m

    def blocks(self, T: int) -> Iterator[np.ndarray]:
        """Yield boolean mask blocks of shape (rows, T)."""
        rows = max(1, _MASK_BLOCK // max(T, 1))
        if self.exhaustive:
            total = 1 << T
            bits = np.arange(T, dtype=np.int64)
            for start in range(0, total, rows):
                idx = np.arange(start, min(total, start + rows), dtype=np.int64)
                yield ((idx[:, None] >> bits[None, :]) & 1).astype(bool)
            return
        rng = np.random.default_rng(self.seed)
        left = self.m
        while left > 0:
            n = min(rows, left)
            yield rng.random((n, T)) < 0.5
            left -= n


# ---------------------------------------------------------------------------
# input handling and level structure


def _coerce(x, p):
    x = np.asarray(x)
    if x.ndim != 1:
        x = x.reshape(-1)
    if x.size and not np.all((x == 0) | (x == 1)):
        raise ValueError("outcomes must be 0 or 1")
    x = x.astype(np.int64)
    p = np.asarray(p)
    if p.ndim != 1:
        p = p.reshape(-1)
    if p.dtype != object:
        p = p.astype(np.float64)
    if x.shape[0] != p.shape[0]:
        raise ValueError(
            f"length mismatch: {x.shape[0]} outcomes vs {p.shape[0]} predictions"
        )
    if p.size:
        if p.dtype == object:
            ok = all(0 <= v <= 1 for v in p)
        else:
            ok = bool(np.all((p >= 0) & (p <= 1)))
        if not ok:
            raise ValueError("predictions must lie in [0, 1]")
    return x, p


@dataclass
class _Levels:
    order: np.ndarray       # argsort of p
    ends: np.ndarray        # index (in sorted order) of the last member of each level
    values: np.ndarray      # float value of each distinct level, ascending
    gaps: np.ndarray        # float(q_{j+1} - q_j), computed exactly then rounded
    x_sorted: np.ndarray    # outcomes in sorted order (float)
    r_sorted: np.ndarray    # residuals x - p in sorted order (float)


def _levels(x: np.ndarray, p: np.ndarray) -> _Levels:
    order = np.argsort(p, kind="stable")
    ps = p[order]
    T = ps.shape[0]
    if T:
        ends = np.flatnonzero(np.concatenate((ps[1:] != ps[:-1], [True])))
    else:
        ends = np.zeros(0, dtype=np.int64)
    exact_levels = ps[ends]
    xs = x[order]
    if p.dtype == object:
        values = np.array([float(v) for v in exact_levels], dtype=np.float64)
        gaps = np.array(
            [float(b - a) for a, b in zip(exact_levels[:-1], exact_levels[1:])],
            dtype=np.float64,
        )
        r = np.array([float(xi - pi) for xi, pi in zip(xs.tolist(), ps)], dtype=np.float64)
    else:
        values = exact_levels
        gaps = values[1:] - values[:-1]
        r = xs - ps
    return _Levels(order, ends, values, gaps, xs.astype(np.float64), r)


def _prefix_sums(vals: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Cumulative sums of ``vals`` (shape (B, T), sorted order) at level ends."""
    return np.cumsum(vals, axis=1)[:, ends]


def _level_sums(vals: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Per-level sums of ``vals`` (shape (B, T), sorted order) -> (B, m)."""
    P = _prefix_sums(vals, ends)
    R = P.copy()
    R[:, 1:] -= P[:, :-1]
    return R


# ---------------------------------------------------------------------------
# objective kernels on per-level aggregates; leading axis is a batch axis


def _step_kernel(P: np.ndarray) -> np.ndarray:
    """From prefix sums at level ends; the empty prefix contributes 0."""
    if P.shape[1] == 0:
        return np.zeros(P.shape[0])
    return np.abs(P).max(axis=1)


def _sign_kernel(P: np.ndarray, q: np.ndarray) -> np.ndarray:
    B, m = P.shape
    if m == 0:
        return np.zeros(B)
    tot = P[:, -1:]
    P_before = np.zeros_like(P)
    P_before[:, 1:] = P[:, :-1]
    # alpha == q_j: levels below count +, levels above count -, level j is 0
    at_level = P_before - (tot - P)
    # alpha strictly between q_j and q_{j+1}, or in (q_m, 1] when q_m < 1
    after = 2.0 * P - tot
    cands = [np.abs(at_level), np.abs(after[:, :-1])]
    if q[-1] < 1.0:
        cands.append(np.abs(after[:, -1:]))
    if q[0] > 0.0:
        cands.append(np.abs(tot))
    return np.concatenate(cands, axis=1).max(axis=1)


def _vcal_kernel(Nle: np.ndarray, Xle: np.ndarray, q: np.ndarray) -> np.ndarray:
    """2 sup_a max{X-(a) - a N-(a), a N+(a) - X+(a)}.

    ``Nle``/``Xle`` hold counts and outcome sums of predictions <= each level.
    """
    B, m = Nle.shape
    best = np.zeros(B)  # alpha in {0, 1} gives exactly 0
    if m == 0:
        return best
    N = Nle[:, -1:]
    X = Xle[:, -1:]
    Nlt = np.zeros_like(Nle)
    Nlt[:, 1:] = Nle[:, :-1]
    Xlt = np.zeros_like(Xle)
    Xlt[:, 1:] = Xle[:, :-1]
    # alpha exactly at a level
    lo = Xlt - q * Nlt
    hi = q * (N - Nle) - (X - Xle)
    best = np.maximum(best, np.maximum(lo, hi).max(axis=1))
    if m > 1:
        # open interval (q_j, q_{j+1}): sup of the decreasing piece at q_j+,
        # of the increasing piece at q_{j+1}-
        lo_int = Xle[:, :-1] - q[:-1] * Nle[:, :-1]
        hi_int = q[1:] * (N - Nle[:, :-1]) - (X - Xle[:, :-1])
        best = np.maximum(best, np.maximum(lo_int, hi_int).max(axis=1))
    if q[0] > 0.0:
        best = np.maximum(best, (q[0] * N - X)[:, 0])
    if q[-1] < 1.0:
        best = np.maximum(best, (X - q[-1] * N)[:, 0])
    return 2.0 * best


# ---------------------------------------------------------------------------
# smooth calibration: exact DP over concave piecewise-linear value functions


def _interp(xs, ys, t):
    i = 1
    while xs[i] < t:
        i += 1
    x0, x1 = xs[i - 1], xs[i]
    if x1 == x0:
        return ys[i]
    return ys[i - 1] + (ys[i] - ys[i - 1]) * (t - x0) / (x1 - x0)


def _smce_levels(w, gaps) -> float:
    """max sum_j w_j f_j over f_j in [-1, 1] with |f_{j+1} - f_j| <= gaps_j."""
    m = len(w)
    if m == 0:
        return 0.0
    xs = [-1.0, 1.0]
    ys = [-w[0], w[0]]
    for j in range(1, m):
        d = gaps[j - 1]
        k = max(range(len(ys)), key=ys.__getitem__)
        nx = [v - d for v in xs[: k + 1]] + [v + d for v in xs[k:]]
        ny = ys[: k + 1] + ys[k:]
        cx = [-1.0]
        cy = [_interp(nx, ny, -1.0)]
        for a, b in zip(nx, ny):
            if -1.0 < a < 1.0:
                cx.append(a)
                cy.append(b)
        cy.append(_interp(nx, ny, 1.0))
        cx.append(1.0)
        wj = w[j]
        xs = cx
        ys = [b + wj * a for a, b in zip(cx, cy)]
    return max(0.0, max(ys))


# ---------------------------------------------------------------------------
# public measures


def step_ce(x, p) -> MeasureValue:
    """Step calibration error, sup_a |sum_t (x_t - p_t) 1{p_t <= a}|."""
    x, p = _coerce(x, p)
    lv = _levels(x, p)
    P = _prefix_sums(lv.r_sorted[None, :], lv.ends)
    return MeasureValue(float(_step_kernel(P)[0]), "step")


def _subset_stats(x, p, sampler, kernel):
    lv = _levels(x, p)
    T = x.shape[0]
    vals = []
    for mask in sampler.blocks(T):
        vals.append(kernel(lv, mask[:, lv.order]))
    v = np.concatenate(vals) if vals else np.zeros(0)
    return v


def _mc_value(v: np.ndarray, kind: str, exhaustive: bool) -> MeasureValue:
    n = v.shape[0]
    mean = math.fsum(v.tolist()) / n
    if exhaustive:
        return MeasureValue(max(mean, 0.0), kind, "exact", stderr=0.0, replicates=n)
    sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
    return MeasureValue(
        max(mean, 0.0), kind, "monte-carlo", stderr=sd / math.sqrt(n), replicates=n
    )


def _step_masked(lv: _Levels, mask: np.ndarray) -> np.ndarray:
    return _step_kernel(_prefix_sums(mask * lv.r_sorted[None, :], lv.ends))


def step_ce_sub(x, p, sampler: SubsetSampler) -> MeasureValue:
    """Subsampled step calibration error, averaged over sampled subsets.

    The inner supremum is exact for every subset; the outer expectation is
    a Monte Carlo mean (with standard error) unless the sampler is
    exhaustive.
    """
    x, p = _coerce(x, p)
    if not sampler.exhaustive and sampler.m < 1:
        raise ValueError("sampler needs m >= 1")
    if x.shape[0] == 0:
        return _mc_value(np.zeros(1), "step_sub", sampler.exhaustive)
    if sampler.exhaustive and x.shape[0] > STEP_SUB_EXACT_MAX_T:
        raise CapabilityError(
            f"exhaustive subsets limited to T <= {STEP_SUB_EXACT_MAX_T}; "
            "use a Monte Carlo sampler"
        )
    v = _subset_stats(x, p, sampler, _step_masked)
    return _mc_value(v, "step_sub", sampler.exhaustive)


def step_ce_sub_exact(x, p) -> MeasureValue:
    """Exact subsampled step calibration error by enumerating all 2^T subsets."""
    x, p = _coerce(x, p)
    T = x.shape[0]
    if T > STEP_SUB_EXACT_MAX_T:
        raise CapabilityError(
            f"step_ce_sub_exact supports T <= {STEP_SUB_EXACT_MAX_T} (got {T}); "
            "use step_ce_sub with a Monte Carlo SubsetSampler"
        )
    if T == 0:
        return MeasureValue(0.0, "step_sub", "exact", stderr=0.0, replicates=1)
    return step_ce_sub(x, p, SubsetSampler(exhaustive=True))


def vcal(x, p) -> MeasureValue:
    """V-Calibration error through its threshold-count form.

    Returns ``2 sup_a max{X-(a) - a N-(a), a N+(a) - X+(a)}`` with strict
    inequalities in the counts; the supremum is taken over one-sided
    limits at the prediction levels, so it is returned even when it is
    not attained.
    """
    x, p = _coerce(x, p)
    lv = _levels(x, p)
    Nle = (lv.ends + 1.0)[None, :]
    Xle = _prefix_sums(lv.x_sorted[None, :], lv.ends)
    return MeasureValue(float(_vcal_kernel(Nle, Xle, lv.values)[0]), "vcal")


def _vcal_masked(lv: _Levels, mask: np.ndarray) -> np.ndarray:
    mf = mask.astype(np.float64)
    Nle = _prefix_sums(mf, lv.ends)
    Xle = _prefix_sums(mf * lv.x_sorted[None, :], lv.ends)
    return _vcal_kernel(Nle, Xle, lv.values)


def vcal_sub(x, p, sampler: SubsetSampler) -> MeasureValue:
    """Subsampled V-Calibration error (mean of vcal over subsets)."""
    x, p = _coerce(x, p)
    if x.shape[0] == 0:
        return _mc_value(np.zeros(1), "vcal_sub", sampler.exhaustive)
    if sampler.exhaustive and x.shape[0] > STEP_SUB_EXACT_MAX_T:
        raise CapabilityError(f"exhaustive subsets limited to T <= {STEP_SUB_EXACT_MAX_T}")
    v = _subset_stats(x, p, sampler, _vcal_masked)
    return _mc_value(v, "vcal_sub", sampler.exhaustive)


def ucal_bounds(x, p) -> MeasureValue:
    """Certified enclosure [vcal, 2 vcal] of the U-Calibration error."""
    v = vcal(x, p).value
    return MeasureValue(v, "ucal", "interval", lower=v, upper=2.0 * v)


def sign_ce(x, p) -> MeasureValue:
    """sup_a |sum_t (x_t - p_t) sgn(a - p_t)|, with sgn(0) = 0."""
    x, p = _coerce(x, p)
    lv = _levels(x, p)
    P = _prefix_sums(lv.r_sorted[None, :], lv.ends)
    return MeasureValue(float(_sign_kernel(P, lv.values)[0]), "sign")


def ece(x, p) -> MeasureValue:
    """Unnormalized ECE: sum over distinct levels of |level residual sum|."""
    x, p = _coerce(x, p)
    lv = _levels(x, p)
    R = _level_sums(lv.r_sorted[None, :], lv.ends)
    return MeasureValue(float(np.abs(R).sum()), "ece")


def smce(x, p) -> MeasureValue:
    """Smooth calibration error over 1-Lipschitz f: [0, 1] -> [-1, 1]."""
    x, p = _coerce(x, p)
    lv = _levels(x, p)
    R = _level_sums(lv.r_sorted[None, :], lv.ends)[0]
    return MeasureValue(_smce_levels(R.tolist(), lv.gaps.tolist()), "smce")


def ssce(x, p, sampler: SubsetSampler) -> MeasureValue:
    """Subsampled smooth calibration error."""
    x, p = _coerce(x, p)
    T = x.shape[0]
    if not sampler.exhaustive and sampler.m < 1:
        raise ValueError("sampler needs m >= 1")
    if sampler.exhaustive and T > SSCE_EXACT_MAX_T:
        raise CapabilityError(
            f"exhaustive SSCE supports T <= {SSCE_EXACT_MAX_T} (got {T}); "
            "use a Monte Carlo SubsetSampler"
        )
    if T == 0:
        return _mc_value(np.zeros(1), "ssce", sampler.exhaustive)
    lv = _levels(x, p)
    gaps = lv.gaps.tolist()
    out = []
    for mask in sampler.blocks(T):
        W = _level_sums(mask[:, lv.order] * lv.r_sorted[None, :], lv.ends)
        out.extend(_smce_levels(row, gaps) for row in W.tolist())
    return _mc_value(np.asarray(out), "ssce", sampler.exhaustive)


def gamma(v: float) -> float:
    """v below 1, sqrt(v) above; the scale of the unavoidable penalty floor."""
    if v < 0:
        raise ValueError("gamma is defined for v >= 0")
    return float(v) if v <= 1 else math.sqrt(v)


# name -> (callable, needs_sampler)
MEASURES = {
    "step": (step_ce, False),
    "step_sub": (step_ce_sub, True),
    "step_sub_exact": (step_ce_sub_exact, False),
    "vcal": (vcal, False),
    "vcal_sub": (vcal_sub, True),
    "ucal": (ucal_bounds, False),
    "sign": (sign_ce, False),
    "ece": (ece, False),
    "smce": (smce, False),
    "ssce": (ssce, True),
}
