"""Episodes, Monte Carlo error estimates, truthfulness gaps and scaling fits.

Randomness
----------
Each episode takes one integer seed.  It is split with
:class:`numpy.random.SeedSequence` into independent streams for the
nature, the outcomes, the forecaster and (for subsampled measures) the
subset sampler.  Replicate ``i`` of an experiment with master seed ``s``
uses the seed ``derive_seed(s, i)``, a 64-bit avalanche mix, so results do
not depend on evaluation order or on how many threads run the replicates.
Replicate values are aggregated with :func:`math.fsum`.

The thread count comes from the ``threads`` argument or, when that is
``None``, from the ``CALIB_THREADS`` environment variable (default 1).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .environments import NatureSpec, make_nature, sample_outcome
from .forecasters import ForecasterSpec, make_forecaster
from .measures import MEASURES, SubsetSampler, gamma

__all__ = [
    "Transcript",
    "MeasureReport",
    "GapReport",
    "ScalingReport",
    "ReplicateBatch",
    "derive_seed",
    "episode_streams",
    "run_episode",
    "evaluate",
    "run_replicates",
    "estimate_error",
    "truthfulness_gap",
    "scaling_fit",
    "opt_floor",
    "thread_count",
    "GAP_EXPERIMENTS",
]

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, index: int) -> int:
    """64-bit seed for replicate ``index`` (splitmix64 finalizer)."""
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def episode_streams(seed: int):
    """(nature, outcome, forecaster, sampler) generators for one episode."""
    kids = np.random.SeedSequence(int(seed)).spawn(4)
    return tuple(np.random.default_rng(k) for k in kids[:3]) + (kids[3],)


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        raw = os.environ.get("CALIB_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"CALIB_THREADS must be an integer (got {raw!r})") from None
    return max(1, int(threads))


# ---------------------------------------------------------------------------
# data records


@dataclass(frozen=True)
class Transcript:
    """One episode: outcomes, conditional probabilities, predictions."""

    x: np.ndarray
    pstar: np.ndarray
    p: np.ndarray
    var_T: float

    def __post_init__(self):
        if not (len(self.x) == len(self.pstar) == len(self.p)):
            raise ValueError("transcript sequences differ in length")

    @property
    def T(self) -> int:
        return len(self.x)

    @staticmethod
    def realized_variance(pstar) -> float:
        v = np.array([float(a) for a in pstar], dtype=np.float64)
        return math.fsum((v * (1.0 - v)).tolist())


@dataclass(frozen=True)
class MeasureReport:
    """Replicate statistics of one measure; CI is mean +/- 1.96 stderr."""

    measure: str
    n: int
    mean: float
    sd: float
    stderr: float
    ci_lo: float
    ci_hi: float
    seed: int
    values: np.ndarray = field(repr=False, compare=False, default=None)

    @classmethod
    def from_values(cls, measure: str, values: Sequence[float], seed: int) -> "MeasureReport":
        v = np.asarray(values, dtype=np.float64)
        n = v.shape[0]
        if n < 2:
            raise ValueError("need at least 2 replicates for a standard error")
        mean = math.fsum(v.tolist()) / n
        sd = math.sqrt(math.fsum(((v - mean) ** 2).tolist()) / (n - 1))
        se = sd / math.sqrt(n)
        return cls(measure, n, mean, sd, se, mean - 1.96 * se, mean + 1.96 * se, int(seed), v)

    def row(self) -> dict:
        return {
            "measure": self.measure, "n": self.n, "mean": self.mean, "sd": self.sd,
            "stderr": self.stderr, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "seed": self.seed,
        }


@dataclass(frozen=True)
class GapReport:
    experiment: str
    T: int
    truthful: MeasureReport
    strategic: MeasureReport
    ratio: float        # truthful mean / strategic mean (inf when strategic is 0)
    difference: float   # truthful mean - strategic mean

    def __post_init__(self):
        a, b = self.truthful, self.strategic
        if a.measure != b.measure or a.n != b.n:
            raise ValueError("gap reports must share measure and replicate count")


@dataclass(frozen=True)
class ScalingReport:
    T_grid: tuple
    reports: tuple
    slope: float
    intercept: float
    residual: float     # root-mean-square residual of the log-log fit
    censored: tuple     # T values whose mean was not positive


@dataclass
class ReplicateBatch:
    """Per-replicate measure values and realized variances."""

    seeds: List[int]
    values: Dict[str, np.ndarray]
    var_T: np.ndarray
    extras: Dict[str, np.ndarray]

    def report(self, measure: str, master_seed: int) -> MeasureReport:
        return MeasureReport.from_values(measure, self.values[measure], master_seed)


# ---------------------------------------------------------------------------
# episodes


def _specs(nature, forecaster):
    if isinstance(nature, dict):
        nature = NatureSpec.from_dict(nature)
    if isinstance(forecaster, dict):
        forecaster = ForecasterSpec.from_dict(forecaster)
    return nature, forecaster


def run_episode(nature, forecaster, seed: int, vectorize: bool = True,
                return_state: bool = False):
    """Play one episode.

    Each step draws p*_t, reveals it to the forecaster, takes p_t and then
    draws x_t ~ Bern(p*_t).  When the nature ignores the outcomes and the
    forecaster ignores the history, the same draws are made in one
    vectorized pass (``vectorize=False`` forces the step loop).
    """
    nature, forecaster = _specs(nature, forecaster)
    state = make_nature(nature)
    fc = make_forecaster(forecaster, state.T, state)
    rn, ro, rf, _ = episode_streams(seed)
    T = state.T
    if vectorize and state.oblivious and fc.memoryless:
        pstar = state.pstar_path(rn)
        p = fc.predict_path(pstar)
        x = (ro.random(T) < pstar).astype(np.int64)
    else:
        ps, pp, xs = [], [], []
        for t in range(T):
            s = state.next_pstar(rn)
            pt = fc.predict(t, s, rf)
            xt = sample_outcome(s, ro, state)
            fc.observe(xt, pt)
            ps.append(s)
            pp.append(pt)
            xs.append(xt)
        x = np.asarray(xs, dtype=np.int64)
        pstar = _as_prob_array(ps)
        p = _as_prob_array(pp)
    tr = Transcript(x, pstar, p, Transcript.realized_variance(pstar))
    return (tr, state) if return_state else tr


def _as_prob_array(vals):
    if any(isinstance(v, Fraction) for v in vals):
        return np.array(vals, dtype=object)
    return np.asarray(vals, dtype=np.float64)


def evaluate(measure: str, tr: Transcript, sampler_seed=None, m: int = 100) -> float:
    """Value of a named measure on a transcript (lower end for intervals)."""
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; choose from {', '.join(MEASURES)}")
    fn, needs_sampler = MEASURES[measure]
    if needs_sampler:
        return fn(tr.x, tr.p, SubsetSampler(m=m, seed=sampler_seed)).value
    return fn(tr.x, tr.p).value


def run_replicates(nature, forecaster, measures: Sequence[str], n_reps: int,
                   master_seed: int, m: int = 100, threads: Optional[int] = None,
                   extra: Optional[Dict[str, Callable]] = None) -> ReplicateBatch:
    """Run ``n_reps`` episodes and evaluate every measure on each.

    ``extra`` maps names to ``fn(transcript, state) -> float`` for
    additional per-episode statistics.
    """
    nature, forecaster = _specs(nature, forecaster)
    for name in measures:
        if name not in MEASURES:
            raise ValueError(f"unknown measure {name!r}; choose from {', '.join(MEASURES)}")
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    seeds = [derive_seed(master_seed, i) for i in range(n_reps)]
    extra = extra or {}

    def one(seed):
        tr, state = run_episode(nature, forecaster, seed, return_state=True)
        sampler_seed = episode_streams(seed)[3]
        vals = tuple(evaluate(name, tr, sampler_seed, m) for name in measures)
        ex = tuple(float(f(tr, state)) for f in extra.values())
        return vals, tr.var_T, ex

    nthreads = thread_count(threads)
    if nthreads == 1:
        out = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            out = list(pool.map(one, seeds))
    values = {name: np.array([o[0][j] for o in out]) for j, name in enumerate(measures)}
    extras = {name: np.array([o[2][j] for o in out]) for j, name in enumerate(extra)}
    return ReplicateBatch(seeds, values, np.array([o[1] for o in out]), extras)


def estimate_error(nature, forecaster, measure: str, n_reps: int, master_seed: int,
                   m: int = 100, threads: Optional[int] = None) -> MeasureReport:
    """Monte Carlo estimate of the expected penalty E[CM(x, p)]."""
    if n_reps < 2:
        raise ValueError("n_reps must be at least 2")
    batch = run_replicates(nature, forecaster, [measure], n_reps, master_seed, m, threads)
    return batch.report(measure, master_seed)


def opt_floor(transcripts: Sequence[Transcript]) -> float:
    """Mean of gamma(Var_T) over transcripts."""
    if len(transcripts) == 0:
        raise ValueError("need at least one transcript")
    return math.fsum(gamma(tr.var_T) for tr in transcripts) / len(transcripts)


# ---------------------------------------------------------------------------
# named truthfulness-gap experiments


@dataclass(frozen=True)
class _GapSetup:
    measure: str
    nature: Callable[[int, dict], NatureSpec]
    strategic: Callable[[dict], dict]


def _binary_search_nature(T, params):
    eps = params.get("epsilon")
    d = {"kind": "binary_search", "T": T}
    if eps is not None:
        d["epsilon"] = eps
    return NatureSpec.from_dict(d)


GAP_EXPERIMENTS = {
    "binary_search": _GapSetup(
        "vcal", _binary_search_nature,
        lambda P: {"kind": "constant", "level": P.get("level", 0.5)},
    ),
    "hedging": _GapSetup(
        "vcal", lambda T, P: NatureSpec("product", T, {"preset": "hedging_fifths"}),
        lambda P: {"kind": "hedging_fifths"},
    ),
    "smoothed_hedging": _GapSetup(
        "vcal", lambda T, P: NatureSpec("smoothed_hedging", T, {"c": P.get("c", 0.1)}),
        lambda P: {"kind": "hedging_fifths"},
    ),
    "epoch": _GapSetup(
        "step", lambda T, P: NatureSpec("epoch", T, {"c": P.get("c", 1 / 64)}),
        lambda P: {"kind": "patching"},
    ),
}


def truthfulness_gap(experiment: str, T: int, params: Optional[dict] = None,
                     n_reps: int = 100, seed: int = 0, measure: Optional[str] = None,
                     m: int = 100, threads: Optional[int] = None) -> GapReport:
    """Truthful versus strategic forecaster on the same nature draws.

    Both forecasters see identical replicate seeds; since each nature's p*
    path depends only on past outcomes, the paired runs face the same
    environment.
    """
    if experiment not in GAP_EXPERIMENTS:
        raise ValueError(
            f"unknown experiment {experiment!r}; choose from {', '.join(GAP_EXPERIMENTS)}"
        )
    setup = GAP_EXPERIMENTS[experiment]
    params = dict(params or {})
    measure = measure or setup.measure
    nat = setup.nature(int(T), params)
    make_nature(nat)  # validate before running anything
    a = estimate_error(nat, {"kind": "truthful"}, measure, n_reps, seed, m, threads)
    b = estimate_error(nat, setup.strategic(params), measure, n_reps, seed, m, threads)
    ratio = math.inf if b.mean == 0 else a.mean / b.mean
    return GapReport(experiment, int(T), a, b, ratio, a.mean - b.mean)


def scaling_fit(nature, forecaster, measure: str, T_grid: Sequence[int], n_reps: int,
                seed: int, m: int = 100, threads: Optional[int] = None) -> ScalingReport:
    """Least-squares slope of log(mean error) against log T.

    ``nature`` is a spec whose T is replaced at every grid point, or a
    callable ``T -> spec``.  Grid points with a non-positive mean are
    reported as censored and left out of the fit.
    """
    grid = [int(t) for t in T_grid]
    if len(grid) < 3:
        raise ValueError("scaling fit needs at least 3 grid points")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("T grid must be strictly increasing")
    reports = []
    for T in grid:
        if callable(nature):
            spec = nature(T)
        else:
            spec = nature if isinstance(nature, NatureSpec) else NatureSpec.from_dict(nature)
            spec = spec.with_T(T)
        reports.append(estimate_error(spec, forecaster, measure, n_reps, seed, m, threads))
    keep = [(T, r.mean) for T, r in zip(grid, reports) if r.mean > 0]
    censored = tuple(T for T, r in zip(grid, reports) if not r.mean > 0)
    if len(keep) >= 2:
        lx = np.log([k[0] for k in keep])
        ly = np.log([k[1] for k in keep])
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + intercept)
        rms = float(np.sqrt(np.mean(resid ** 2)))
    else:
        slope = intercept = rms = math.nan
    return ScalingReport(tuple(grid), tuple(reports), float(slope), float(intercept), rms, censored)
