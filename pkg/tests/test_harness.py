import math

import numpy as np
import pytest
from scipy.stats import binom

from stepcal.environments import NatureSpec
from stepcal.harness import (
    MeasureReport,
    Transcript,
    derive_seed,
    estimate_error,
    opt_floor,
    run_episode,
    run_replicates,
    scaling_fit,
    truthfulness_gap,
)
from stepcal.measures import vcal

HALF = {"kind": "product", "T": 400, "pstar": 0.5}


class TestEpisode:
    def test_truthful_copies_pstar(self):
        tr = run_episode({"kind": "smoothed_hedging", "T": 50, "c": 0.1}, {"kind": "truthful"}, 1)
        assert np.array_equal(tr.p, tr.pstar)

    def test_degenerate_product(self):
        v = [0, 1, 1, 0, 1]
        tr = run_episode({"kind": "product", "pstar": v, "T": 5}, {"kind": "truthful"}, 3)
        assert list(tr.x) == v
        assert tr.var_T == 0

    def test_deterministic(self):
        spec = {"kind": "epoch", "T": 150, "c": 1 / 64}
        a = run_episode(spec, {"kind": "patching"}, 11)
        b = run_episode(spec, {"kind": "patching"}, 11)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.p, b.p)
        assert np.array_equal(a.pstar, b.pstar)

    @pytest.mark.parametrize("nature", [
        {"kind": "product", "T": 60, "preset": "hedging_fifths"},
        {"kind": "smoothed_hedging", "T": 60, "c": 0.05},
        {"kind": "smoothed_product", "T": 60, "c": 0.25, "base": 0.3},
    ])
    @pytest.mark.parametrize("forecaster", [
        {"kind": "truthful"}, {"kind": "constant", "level": 0.5}, {"kind": "hedging_fifths"},
    ])
    def test_vectorized_path_matches_loop(self, nature, forecaster):
        a = run_episode(nature, forecaster, 5)
        b = run_episode(nature, forecaster, 5, vectorize=False)
        for f in ("x", "pstar", "p"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
        assert a.var_T == b.var_T

    def test_var_T(self):
        tr = run_episode({"kind": "binary_search", "T": 30}, {"kind": "truthful"}, 2)
        ps = np.array([float(v) for v in tr.pstar])
        assert tr.var_T == pytest.approx(np.sum(ps * (1 - ps)), abs=1e-9)

    def test_transcript_lengths(self):
        with pytest.raises(ValueError):
            Transcript(np.zeros(2), np.zeros(3), np.zeros(2), 0.0)

    def test_inconsistent_spec(self):
        with pytest.raises(ValueError):
            run_episode({"kind": "product", "T": 5, "pstar": [0.5, 0.5]}, {"kind": "truthful"}, 0)


class TestEstimate:
    def test_degenerate(self):
        r = estimate_error({"kind": "product", "pstar": [1, 0, 1], "T": 3},
                           {"kind": "truthful"}, "step", 5, 0)
        assert r.mean == 0 and r.sd == 0

    def test_binomial_oracle(self):
        # [DERIVED] exact E|Bin(400, 1/2) - 200| by summation over the pmf
        k = np.arange(401)
        expect = float(np.sum(binom.pmf(k, 400, 0.5) * np.abs(k - 200)))
        r = estimate_error(HALF, {"kind": "constant", "level": 0.5}, "step", 500, 7)
        assert abs(r.mean - expect) <= 3 * r.stderr

    def test_hedging_strategic_small(self):
        # desk-scale version of the zero-penalty hedge
        r = estimate_error({"kind": "product", "T": 1000, "preset": "hedging_fifths"},
                           {"kind": "hedging_fifths"}, "vcal", 200, 3)
        assert r.mean <= 0.05

    def test_needs_two_reps(self):
        with pytest.raises(ValueError):
            estimate_error(HALF, {"kind": "truthful"}, "step", 1, 0)

    def test_unknown_measure(self):
        with pytest.raises(ValueError, match="unknown measure"):
            estimate_error(HALF, {"kind": "truthful"}, "brier", 3, 0)

    def test_report_fields(self):
        r = MeasureReport.from_values("step", [1.0, 2.0, 3.0, 4.0], 9)
        assert r.stderr == pytest.approx(r.sd / 2)
        assert r.ci_lo == pytest.approx(r.mean - 1.96 * r.stderr)
        assert r.ci_hi == pytest.approx(r.mean + 1.96 * r.stderr)

    def test_thread_count_does_not_change_bits(self):
        nat = {"kind": "smoothed_hedging", "T": 200, "c": 0.1}
        a = estimate_error(nat, {"kind": "truthful"}, "step_sub", 24, 5, m=20, threads=1)
        b = estimate_error(nat, {"kind": "truthful"}, "step_sub", 24, 5, m=20, threads=4)
        assert a.mean == b.mean and a.sd == b.sd
        assert np.array_equal(a.values, b.values)

    def test_env_thread_count(self, monkeypatch):
        nat = {"kind": "binary_search", "T": 40}
        monkeypatch.setenv("CALIB_THREADS", "3")
        a = estimate_error(nat, {"kind": "truthful"}, "vcal", 10, 1)
        monkeypatch.setenv("CALIB_THREADS", "1")
        b = estimate_error(nat, {"kind": "truthful"}, "vcal", 10, 1)
        assert a == b

    def test_derived_seeds_distinct(self):
        seeds = {derive_seed(0, i) for i in range(10_000)}
        assert len(seeds) == 10_000
        assert derive_seed(1, 0) != derive_seed(0, 0)


class TestGap:
    def test_binary_search_every_replicate(self):
        # [PAPER] deterministic vcal >= T/4 for the truthful forecaster
        g = truthfulness_gap("binary_search", 200, n_reps=20, seed=2)
        assert np.all(g.truthful.values >= 50)
        assert g.truthful.measure == g.strategic.measure == "vcal"

    def test_paired_natures(self):
        # both forecasters face the same p* path on the same replicate seed
        spec = NatureSpec("smoothed_hedging", 100, {"c": 0.1})
        a = run_episode(spec, {"kind": "truthful"}, 4)
        b = run_episode(spec, {"kind": "hedging_fifths"}, 4)
        assert np.array_equal(a.pstar, b.pstar) and np.array_equal(a.x, b.x)

    def test_epoch_defaults(self):
        g = truthfulness_gap("epoch", 150, n_reps=4, seed=0)
        assert g.truthful.measure == "step"

    def test_invalid_params(self):
        with pytest.raises(ValueError, match="divisible"):
            truthfulness_gap("epoch", 100, {"c": 1 / 64}, n_reps=2)
        with pytest.raises(ValueError, match="unknown experiment"):
            truthfulness_gap("nope", 100)


class TestScaling:
    def test_bernoulli_half_sqrt_law(self):
        # [DERIVED] E|binomial bias| grows like sqrt(T)
        r = scaling_fit({"kind": "product", "T": 1, "pstar": 0.5}, {"kind": "truthful"},
                        "step", [100, 400, 1600, 6400], 200, 1)
        assert 0.4 <= r.slope <= 0.6
        assert len(r.reports) == 4 and r.censored == ()

    def test_censoring(self):
        r = scaling_fit({"kind": "product", "T": 2, "preset": "hedging_fifths"},
                        {"kind": "hedging_fifths"}, "vcal", [20, 40, 1000], 30, 1)
        assert 1000 in r.censored

    def test_grid_checks(self):
        with pytest.raises(ValueError):
            scaling_fit(HALF, {"kind": "truthful"}, "step", [10, 20], 3, 0)
        with pytest.raises(ValueError):
            scaling_fit(HALF, {"kind": "truthful"}, "step", [10, 30, 20], 3, 0)


class TestOptFloor:
    def test_degenerate(self):
        tr = run_episode({"kind": "product", "pstar": [0, 1], "T": 2}, {"kind": "truthful"}, 0)
        assert opt_floor([tr]) == 0

    def test_constant_half(self):
        # Var_T = 25 deterministically, gamma = 5
        tr = run_episode({"kind": "product", "pstar": 0.5, "T": 100}, {"kind": "truthful"}, 0)
        assert opt_floor([tr, tr]) == 5

    def test_smoothed_stable_across_seeds(self):
        nat = {"kind": "smoothed_hedging", "T": 200, "c": 0.1}
        a = run_replicates(nat, {"kind": "truthful"}, ["step"], 100, 1).var_T
        b = run_replicates(nat, {"kind": "truthful"}, ["step"], 100, 2).var_T
        ga = np.sqrt(a)
        gb = np.sqrt(b)
        se = math.hypot(ga.std(ddof=1), gb.std(ddof=1)) / 10
        assert abs(ga.mean() - gb.mean()) <= 3 * se

    def test_empty(self):
        with pytest.raises(ValueError):
            opt_floor([])


def test_binary_search_vcal_direct():
    tr = run_episode({"kind": "binary_search", "T": 300}, {"kind": "truthful"}, 8)
    assert vcal(tr.x, tr.pstar).value >= 75
