import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stepcal.forecasters import (
    Constant,
    HedgingFifths,
    Patching,
    Truthful,
    hedge_split,
    hedge_step_init,
    hedge_step_predict,
    hedge_step_update,
    make_forecaster,
)


def drive(fc, outcomes, pstar=None, rng=None):
    rng = rng or np.random.default_rng(0)
    out = []
    for t, x in enumerate(outcomes):
        p = fc.predict(t, None if pstar is None else pstar[t], rng)
        fc.observe(x, p)
        out.append(p)
    return out


class TestSimple:
    @pytest.mark.parametrize("v", [0.37, 0.0, 1.0])
    def test_truthful(self, v):
        assert Truthful(3).predict(0, v, None) == v

    @pytest.mark.parametrize("level", [0.5, 0.0, 1.0])
    def test_constant(self, level):
        assert drive(Constant(4, level), [1, 0, 1, 1]) == [level] * 4

    def test_constant_range(self):
        with pytest.raises(ValueError):
            Constant(3, 1.5)

    def test_hedging_fifths(self):
        # [PAPER] T/2 copies of 2/5 then 3/5
        assert drive(HedgingFifths(4), [0, 0, 1, 1]) == [0.4, 0.4, 0.6, 0.6]
        f = HedgingFifths(10)
        assert f.predict(0, None, None) == 0.4 and f.predict(9, None, None) == 0.6

    def test_paths_match_steps(self):
        ps = np.linspace(0, 1, 10)
        for fc in (Truthful(10), Constant(10, 0.3), HedgingFifths(10)):
            assert np.array_equal(fc.predict_path(ps), [fc.predict(t, ps[t], None) for t in range(10)])


class TestPatching:
    T, c = 100, 0.1

    def test_head_is_half(self):
        f = Patching(self.T, self.c)
        assert drive(f, [1] * 20) == [0.5] * 20

    def test_negative_surplus(self):
        # head: 5 ones in 20 steps -> delta = -5; middle at c/2
        head = [1] * 5 + [0] * 15
        mid = [0] * 40
        # tail: ones add +1/2 each; 10 ones restore the surplus to 0
        tail = [1] * 40
        p = drive(Patching(self.T, self.c), head + mid + tail)
        assert p[20:60] == [0.05] * 40
        assert p[60:70] == [0.5] * 10
        assert p[70:] == [0.95] * 30

    def test_nonnegative_surplus(self):
        # [DERIVED] delta = +3: middle predicts 1/2 until 6 zeros cancel it
        head = [1] * 13 + [0] * 7
        mid = [0] * 40
        tail = [1] * 40
        p = drive(Patching(self.T, self.c), head + mid + tail)
        assert p[20:26] == [0.5] * 6
        assert p[26:60] == [0.05] * 34
        assert p[60:] == [0.95] * 40

    def test_zero_surplus_goes_straight_to_low_level(self):
        head = [1] * 10 + [0] * 10
        p = drive(Patching(self.T, self.c), head + [0] * 80)
        assert p[20:60] == [0.05] * 40

    def test_patch_is_one_shot(self):
        # the bias recrossing zero does not re-enable 1/2
        head = [1] * 5 + [0] * 15
        tail = [1] * 10 + [0] * 10 + [1] * 20
        p = drive(Patching(self.T, self.c), head + [0] * 40 + tail)
        assert p[70:] == [0.95] * 30

    def test_divisibility(self):
        with pytest.raises(ValueError):
            Patching(95, 0.1)

    def test_takes_c_from_nature(self):
        class N:
            c = 0.02
        assert make_forecaster({"kind": "patching"}, 100, N()).c == 0.02
        with pytest.raises(ValueError):
            make_forecaster({"kind": "patching"}, 100)


class TestHedge:
    def test_init(self):
        s = hedge_step_init(2, 10)
        assert np.allclose(s.weights, 0.25)
        # [DERIVED] eta = sqrt(8 ln 200 / 100)
        assert hedge_step_init(100, 100).eta == pytest.approx(math.sqrt(8 * math.log(200) / 100))
        assert hedge_step_init(3, 10, eta=0.5).eta == 0.5

    def test_init_rejects_small_k(self):
        with pytest.raises(ValueError):
            hedge_step_init(1, 10)

    def test_uniform_predicts_one(self):
        assert hedge_step_predict(hedge_step_init(5, 10), np.random.default_rng(0)) == 1.0

    def test_split_example(self):
        lo, hi, q = hedge_split(np.array([0.5, 0.2, -0.3]))
        assert (lo, hi) == (1, 2)
        assert q == pytest.approx(0.6)
        assert q * 0.2 + (1 - q) * -0.3 == pytest.approx(0, abs=1e-15)

    def test_split_all_nonpositive(self):
        assert hedge_split(np.array([-0.1, 0.0, -0.2])) == (0, 0, 1.0)

    def test_split_both_zero(self):
        lo, hi, q = hedge_split(np.array([0.0, 0.0, 0.3, -0.2]))
        assert (lo, hi, q) == (0, 1, 1.0)

    def test_split_zero_then_negative(self):
        # first qualifying pair is (0.3, 0): all mass on the zero level
        lo, hi, q = hedge_split(np.array([0.3, 0.0, 0.0, -0.2]))
        assert (lo, hi) == (0, 1) and q == 0.0 and math.copysign(1, q) == 1

    def test_randomization_frequency(self):
        # [DERIVED] q = 0.6 at levels (1/2, 1): the lower level wins 60% of draws
        s = hedge_step_init(3, 10)
        s.logw = np.log(np.array([[0.05, 0.05, 0.2], [0.05, 0.35, 0.3]]))
        C = np.cumsum((s.weights[0] - s.weights[1])[::-1])[::-1]
        lo, hi, q = hedge_split(C)
        rng = np.random.default_rng(1)
        draws = np.array([hedge_step_predict(s, rng) for _ in range(100_000)])
        assert set(np.unique(draws)) <= {s.levels[lo], s.levels[hi]}
        assert abs(np.mean(draws == s.levels[lo]) - q) <= 0.01

    def test_zero_loss_round(self):
        s = hedge_step_init(4, 10)
        w0 = s.weights.copy()
        hedge_step_update(s, 1, 1.0)
        assert np.allclose(s.weights, w0, atol=1e-15)

    def test_single_update(self):
        # [DERIVED] k = 2, x = 1, p = 0: loss sigma on every expert
        s = hedge_step_init(2, 10)
        hedge_step_update(s, 1, 0.0)
        w = s.weights
        assert w[0, 0] / w[1, 0] == pytest.approx(math.exp(s.eta))
        assert w[0, 1] / w[1, 1] == pytest.approx(math.exp(s.eta))

    def test_off_grid(self):
        with pytest.raises(ValueError, match="grid"):
            hedge_step_update(hedge_step_init(3, 10), 1, 0.3)

    def test_forecaster_default_k(self):
        assert make_forecaster({"kind": "hedge_step"}, 64).state.k == 64


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.lists(st.integers(0, 1), min_size=1, max_size=40),
       st.integers(0, 2 ** 31))
def test_hedge_invariants(k, outcomes, seed):
    rng = np.random.default_rng(seed)
    s = hedge_step_init(k, len(outcomes))
    for x in outcomes:
        C = np.cumsum((s.weights[0] - s.weights[1])[::-1])[::-1]
        lo, hi, q = hedge_split(C)
        assert 0 <= q <= 1 and hi - lo in (0, 1)
        if hi != lo:
            # the randomized prediction zeroes the expected sign
            assert q * C[lo] + (1 - q) * C[hi] == pytest.approx(0, abs=1e-12)
        p = hedge_step_predict(s, rng)
        hedge_step_update(s, x, p)
        w = s.weights
        assert np.all(w >= 0)
        assert abs(w.sum() - 1) <= 1e-12
