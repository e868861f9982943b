"""Brute-force reference implementations.

These deliberately avoid the level-grouping machinery of
:mod:`stepcal.measures`: thresholds are scanned on a dense grid, subsets
are enumerated one by one, and the smooth-calibration program is solved
over a discretized set of function values.  They are slow and exist to
cross-check the exact routines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .measures import CapabilityError, smce, step_ce, vcal, sign_ce, ssce, SubsetSampler
from .measures import step_ce_sub_exact, _smce_levels

__all__ = [
    "OracleReport",
    "grid_sup_oracle",
    "subset_enumeration_oracle",
    "smce_grid_oracle",
    "smce_grid_slack",
    "random_instance",
    "oracle_battery",
]

SUBSET_MAX_T = 16
SMCE_MAX_LEVELS = 6
LIMIT_OFFSET = 1e-7


@dataclass(frozen=True)
class OracleReport:
    kind: str
    optimized: float
    oracle: float
    diff: float
    instance: str

    def __post_init__(self):
        if self.diff < 0:
            raise ValueError("diff must be nonnegative")


def _arrays(x, p):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    p = np.asarray([float(v) for v in np.asarray(p, dtype=object).reshape(-1)], dtype=np.float64)
    if x.shape != p.shape:
        raise ValueError("length mismatch")
    return x, p


def grid_sup_oracle(x, p, objective: str, grid_step: float = 1e-3,
                    offset: float = LIMIT_OFFSET) -> float:
    """Maximize a threshold objective over a dense grid of alphas.

    The grid is {0, h, 2h, ..., 1} together with p_t +/- ``offset`` (to
    reach one-sided limits at the prediction values).  The result is a
    lower bound on the true supremum.

    objective : {"step", "sign", "vcal"}
    """
    if not 0 < grid_step <= 1e-3:
        raise ValueError("grid_step must be in (0, 1e-3]")
    if objective not in ("step", "sign", "vcal"):
        raise ValueError(f"unknown objective {objective!r}")
    x, p = _arrays(x, p)
    if x.size == 0:
        return 0.0
    n = int(round(1.0 / grid_step))
    grid = np.concatenate([
        np.arange(n + 1) * grid_step,
        [1.0],
        p - offset,
        p + offset,
    ])
    grid = grid[(grid >= 0.0) & (grid <= 1.0)]
    r = x - p
    best = 0.0
    # chunk the alpha axis so the indicator matrix stays small
    chunk = max(1, 400_000 // x.size)
    for i in range(0, grid.size, chunk):
        a = grid[i:i + chunk, None]
        if objective == "step":
            val = np.abs(((p[None, :] <= a) * r[None, :]).sum(axis=1))
        elif objective == "sign":
            val = np.abs((np.sign(a - p[None, :]) * r[None, :]).sum(axis=1))
        else:
            below = p[None, :] < a
            above = p[None, :] > a
            a1 = a[:, 0]
            lo = (below * x[None, :]).sum(axis=1) - a1 * below.sum(axis=1)
            hi = a1 * above.sum(axis=1) - (above * x[None, :]).sum(axis=1)
            val = 2.0 * np.maximum(lo, hi)
        best = max(best, float(val.max()))
    return best


def _brute_step(xs, ps) -> float:
    """sup_a |sum (x - p) 1{p <= a}| by trying every prediction as a threshold."""
    best = 0.0
    for a in set(ps):
        best = max(best, abs(float(sum(xi - pi for xi, pi in zip(xs, ps) if pi <= a))))
    return best


def _brute_smce(xs, ps) -> float:
    levels = sorted(set(ps))
    w = [float(sum(xi - pi for xi, pi in zip(xs, ps) if pi == q)) for q in levels]
    gaps = [float(b - a) for a, b in zip(levels[:-1], levels[1:])]
    return _smce_levels(w, gaps)


def subset_enumeration_oracle(x, p, inner: Union[str, Callable] = "step") -> float:
    """Exact average of ``inner`` over all 2^T subsets, one subset at a time.

    ``inner`` is ``"step"`` (brute force over thresholds), ``"smce"``,
    ``"vcal"`` or a callable taking (x, p) lists and returning a float.
    """
    x = [int(v) for v in np.asarray(x).reshape(-1)]
    p = list(np.asarray(p, dtype=object).reshape(-1))
    if len(x) != len(p):
        raise ValueError("length mismatch")
    T = len(x)
    if T > SUBSET_MAX_T:
        raise CapabilityError(f"subset enumeration supports T <= {SUBSET_MAX_T} (got {T})")
    if inner == "step":
        fn = _brute_step
    elif inner == "smce":
        fn = _brute_smce
    elif inner == "vcal":
        fn = lambda xs, ps: vcal(xs, ps).value  # noqa: E731
    else:
        fn = inner
    total = []
    for bits in itertools.product((0, 1), repeat=T):
        xs = [xi for xi, b in zip(x, bits) if b]
        ps = [pi for pi, b in zip(p, bits) if b]
        total.append(float(fn(xs, ps)) if xs else 0.0)
    return math.fsum(total) / len(total)


def smce_grid_oracle(x, p, f_grid_step: float = 0.05) -> float:
    """Smooth calibration error with f restricted to a grid of values.

    Every level's f-value ranges over {-1, -1 + h, ..., 1}; a path of
    values is feasible when consecutive levels differ by at most their
    gap.  The maximum over all feasible paths is found by a max-plus
    recursion over the grid (equivalent to enumerating every path).
    """
    x, p = _arrays(x, p)
    levels = sorted(set(p.tolist()))
    if len(levels) > SMCE_MAX_LEVELS:
        raise CapabilityError(f"smce grid oracle supports <= {SMCE_MAX_LEVELS} levels")
    if not levels:
        return 0.0
    N = int(round(2.0 / f_grid_step))
    if abs(N * f_grid_step - 2.0) > 1e-12:
        raise ValueError("f_grid_step must divide 2")
    g = -1.0 + 2.0 * np.arange(N + 1) / N
    w = [float(sum(xi - pi for xi, pi in zip(x, p) if pi == q)) for q in levels]
    val = w[0] * g
    for j in range(1, len(levels)):
        d = levels[j] - levels[j - 1]
        feas = np.abs(g[:, None] - g[None, :]) <= d + 1e-12
        prev = np.where(feas, val[:, None], -np.inf).max(axis=0)
        val = prev + w[j] * g
    return max(0.0, float(val.max()))


def smce_grid_slack(x, p, f_grid_step: float) -> float:
    """Certified gap between :func:`smce` and :func:`smce_grid_oracle`.

    Rounding an optimal f greedily onto the grid while clamping to the
    feasible window loses at most ``j * h`` at the j-th level, so the gap
    is at most ``m * h * sum_j |w_j|``; it is 0 when every level is a
    multiple of ``h / 2`` (optimal vertices then lie on the grid).
    """
    x, p = _arrays(x, p)
    levels = sorted(set(p.tolist()))
    w = [abs(sum(xi - pi for xi, pi in zip(x, p) if pi == q)) for q in levels]
    return len(levels) * f_grid_step * sum(w)


def random_instance(rng: np.random.Generator, T: int):
    """Random (x, p) with a mix of continuous and tied prediction values."""
    mode = rng.integers(0, 3)
    if mode == 0:
        p = rng.random(T)
    elif mode == 1:
        p = rng.integers(0, 11, T) / 10.0
    else:
        p = np.where(rng.random(T) < 0.5, rng.integers(0, 5, T) / 4.0, rng.random(T))
    x = (rng.random(T) < np.where(rng.random() < 0.5, p, rng.random(T))).astype(np.int64)
    return x, p


def _describe(x, p) -> str:
    return "x=" + "".join(str(int(v)) for v in x) + ";p=" + "|".join(f"{v:.6g}" for v in p)


def oracle_battery(instances: int = 200, max_T: int = 12, seed: int = 0,
                   grid_step: float = 1e-3, offset: float = 1e-8,
                   subset_T: int = 0, f_grid_step: float = 0.05):
    """Random-instance cross-check of every optimized measure against its oracle.

    ``subset_T`` > 0 forces subset comparisons at that exact length, which
    raises :class:`CapabilityError` above the enumeration limit.
    """
    if subset_T > SUBSET_MAX_T:
        raise CapabilityError(f"subset enumeration supports T <= {SUBSET_MAX_T} (got {subset_T})")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(instances):
        T = int(rng.integers(0, max_T + 1))
        x, p = random_instance(rng, T)
        desc = _describe(x, p)
        for kind, fn in (("step", step_ce), ("sign", sign_ce), ("vcal", vcal)):
            a = fn(x, p).value
            b = grid_sup_oracle(x, p, kind, grid_step, offset)
            out.append(OracleReport(kind, a, b, abs(a - b), desc))
        sT = subset_T or min(T, 10)
        xs, ps = x[:sT], p[:sT]
        a = step_ce_sub_exact(xs, ps).value
        b = subset_enumeration_oracle(xs, ps, "step")
        out.append(OracleReport("step_sub", a, b, abs(a - b), _describe(xs, ps)))
        if len(set(p.tolist())) <= SMCE_MAX_LEVELS:
            # snap to the grid lattice so the discretized optimum is exact
            pq = np.round(p * 20) / 20
            a = smce(x, pq).value
            b = smce_grid_oracle(x, pq, f_grid_step)
            out.append(OracleReport("smce", a, b, abs(a - b), _describe(x, pq)))
    return out


def ssce_exhaustive(x, p) -> float:
    return ssce(x, p, SubsetSampler(exhaustive=True)).value
