import math

import mpmath as mp
import numpy as np
import pytest

from tunnelab.errors import PrecisionError
from tunnelab.numerics import (
    GAUSS_ORDER,
    NodeSet,
    PrecisionContext,
    WeightVector,
    gl_panel_rule_f64,
    integrate,
    lagrange_weights,
    make_context,
    moment_residuals,
    pairwise_sum,
    required_digits,
    vandermonde_solve,
)


class TestContext:
    def test_minimum_double_equivalent(self):
        ctx = make_context(15)
        assert ctx.digits == 15 and ctx.use_floats

    def test_high_precision(self):
        ctx = make_context(600)
        assert ctx.dps == 610 and not ctx.use_floats

    @pytest.mark.parametrize("bad", [0, 14, -3])
    def test_rejects_low_digits(self, bad):
        with pytest.raises(ValueError):
            make_context(bad)

    def test_rejects_non_integer(self):
        with pytest.raises(ValueError):
            PrecisionContext(digits=20.5)  # type: ignore[arg-type]


class TestRequiredDigits:
    def test_single_node_floor(self):
        assert required_digits(0, 1.0, -6.0) == 55

    def test_small_case_hits_floor(self):
        # nodes {0,1,2}, target -1: max |l_m| = 3, so the 55 floor binds
        assert required_digits(2, 2.0, -1.0) == 55

    def test_grows_with_extrapolation_distance(self):
        r1 = required_digits(40, 1.5, -3.0)
        r2 = required_digits(40, 1.5, -6.0)
        assert 55 < r1 < r2

    def test_golden_value_at_large_K(self):
        # frozen from the log-magnitude accumulation oracle
        assert required_digits(150, 1.5, -6.0) == 287

    def test_target_on_node(self):
        assert required_digits(4, 4.0, 2.0) == 55

    def test_rejects_negative_K(self):
        with pytest.raises(ValueError):
            required_digits(-1, 1.0, -1.0)


class TestLagrangeWeights:
    def test_identity_extrapolation(self):
        ctx = make_context(15)
        wv = lagrange_weights(NodeSet(nodes=(0.0,), target=0.0), ctx)
        assert wv.weights == (mp.mpf(1),)

    def test_two_nodes_hand_solved(self):
        # sum w = 1, sum m w_m = -1  =>  {2, -1}
        ctx = make_context(15)
        wv = lagrange_weights(NodeSet(nodes=(0.0, 1.0), target=-1.0), ctx)
        assert [float(w) for w in wv.weights] == [2.0, -1.0]

    def test_three_nodes_hand_solved(self):
        ctx = make_context(15)
        wv = lagrange_weights(NodeSet(nodes=(0.0, 1.0, 2.0), target=-1.0), ctx)
        assert [float(w) for w in wv.weights] == [3.0, -3.0, 1.0]

    def test_target_on_node_gives_unit_vector(self):
        ctx = make_context(20)
        wv = lagrange_weights(NodeSet(nodes=(0.0, 0.5, 1.0, 1.5), target=1.0), ctx)
        assert [float(w) for w in wv.weights] == [0.0, 0.0, 1.0, 0.0]

    def test_duplicate_nodes_rejected(self):
        with pytest.raises(ValueError):
            NodeSet(nodes=(0.0, 0.0, 1.0), target=-1.0)

    def test_weight_sum_is_one(self):
        ctx = make_context(30)
        wv = lagrange_weights(NodeSet(nodes=tuple(0.1 * k for k in range(9)), target=-0.7), ctx)
        with mp.workdps(60):
            assert abs(mp.fsum(wv.weights) - 1) < mp.mpf("1e-35")

    def test_insufficient_precision_detected(self):
        # K=40 extrapolation carries ~43 decades of cancellation; the residual
        # bound 10^(-digits/3) cannot be met for a 200-digit request if the
        # check itself were run at the wrong precision. The guarantee holds
        # because the solver raises the working precision internally.
        ctx = make_context(200)
        nodes = tuple(1.5 * k / 40 for k in range(41))
        wv = lagrange_weights(NodeSet(nodes=nodes, target=-3.0), ctx)
        res = moment_residuals(wv, NodeSet(nodes=nodes, target=-3.0), 40, ctx, dps=300)
        assert max(res) < mp.mpf(10) ** (-200 / 3)


class TestVandermondeOracle:
    def test_hand_cases(self):
        ctx = make_context(15)
        for nodes, target, expected in [
            ((0.0,), 0.0, [1.0]),
            ((0.0, 1.0), -1.0, [2.0, -1.0]),
            ((0.0, 1.0, 2.0), -1.0, [3.0, -3.0, 1.0]),
        ]:
            wv = vandermonde_solve(NodeSet(nodes=nodes, target=target), ctx)
            assert [float(w) for w in wv.weights] == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("K", [1, 3, 7, 13, 19, 30])
    def test_agreement_with_lagrange(self, K):
        rng = np.random.default_rng(1234 + K)
        nodes = np.sort(rng.uniform(-1.0, 2.0, K + 1))
        while np.min(np.diff(nodes)) < 1e-3:
            nodes = np.sort(rng.uniform(-1.0, 2.0, K + 1))
        ns = NodeSet(nodes=tuple(float(x) for x in nodes), target=-2.5)
        digits = required_digits(K, float(nodes[-1] - nodes[0]), -2.5)
        ctx = make_context(digits)
        wl = lagrange_weights(ns, ctx)
        wo = vandermonde_solve(ns, ctx)
        with mp.workdps(2 * digits):
            tol = mp.mpf(10) ** (-mp.mpf(digits) / 2)
            for a, b in zip(wl.weights, wo.weights):
                scale = max(abs(a), mp.mpf(1))
                assert abs(a - b) / scale < tol


class TestMomentResiduals:
    def test_hand_cases_vanish(self):
        ctx = make_context(15)
        cases = [
            ((1.0,), (0.0,), 0.0, 0),
            ((2.0, -1.0), (0.0, 1.0), -1.0, 1),
            ((3.0, -3.0, 1.0), (0.0, 1.0, 2.0), -1.0, 2),
        ]
        for ws, nodes, target, jmax in cases:
            res = moment_residuals(
                WeightVector(weights=ws), NodeSet(nodes=nodes, target=target), jmax, ctx
            )
            assert max(float(r) for r in res) < 1e-24

    def test_jmax_bound(self):
        ctx = make_context(15)
        with pytest.raises(ValueError):
            moment_residuals(
                WeightVector(weights=(1.0,)), NodeSet(nodes=(0.0,), target=0.0), 1, ctx
            )


class TestIntegrate:
    def test_constant(self):
        ctx = make_context(15)
        assert abs(integrate(lambda x: mp.mpf(1), (0, 1), 1, ctx) - 1) < mp.mpf("1e-20")

    def test_gaussian_against_erf(self):
        ctx = make_context(30)
        val = integrate(lambda x: mp.exp(-x * x), (-8, 8), 8, ctx)
        with mp.workdps(50):
            expected = mp.sqrt(mp.pi) * mp.erf(8)
            assert abs(val - expected) / expected < mp.mpf("1e-28")

    def test_full_periods_oscillatory(self):
        ctx = make_context(15)
        val = integrate(lambda x: mp.expj(50 * x), (0, 2 * mp.pi), 32, ctx)
        assert abs(val) < mp.mpf("1e-14")

    def test_polynomial_exactness_single_panel(self):
        # degree 2*order-1 is integrated exactly by one panel
        rng = np.random.default_rng(7)
        coeffs = rng.uniform(-1, 1, 2 * GAUSS_ORDER)
        ctx = make_context(15)

        def poly(x):
            acc = mp.mpf(0)
            for c in reversed(coeffs):
                acc = acc * x + mp.mpf(float(c))
            return acc

        val = integrate(poly, (-1, 1), 1, ctx)
        with mp.workdps(40):
            expected = mp.fsum(
                mp.mpf(float(c)) * (1 - (-1) ** (k + 1)) / (k + 1)
                for k, c in enumerate(coeffs)
            )
        assert abs(val - expected) < mp.mpf("1e-18")

    def test_nonfinite_sample_rejected(self):
        ctx = make_context(15)
        with pytest.raises(ValueError):
            integrate(lambda x: mp.inf, (0, 1), 1, ctx)

    def test_panel_validation(self):
        ctx = make_context(15)
        with pytest.raises(ValueError):
            integrate(lambda x: mp.mpf(1), (0, 1), 0, ctx)

    def test_reproducible_bit_for_bit(self):
        ctx = make_context(25)
        a = integrate(lambda x: mp.exp(-x * x) * mp.cos(3 * x), (0, 2), 4, ctx)
        b = integrate(lambda x: mp.exp(-x * x) * mp.cos(3 * x), (0, 2), 4, ctx)
        assert mp.nstr(a, 30) == mp.nstr(b, 30)


def test_pairwise_sum_matches_sequential():
    rng = np.random.default_rng(3)
    with mp.workdps(40):
        vals = [mp.mpf(float(v)) for v in rng.uniform(-1, 1, 37)]
        assert abs(pairwise_sum(vals) - mp.fsum(vals)) < mp.mpf("1e-30")
    assert pairwise_sum([]) == 0


def test_f64_panel_rule_integrates_gaussian():
    xs, ws = gl_panel_rule_f64(-8.0, 8.0, 8)
    val = float(np.sum(ws * np.exp(-xs * xs)))
    assert abs(val - math.sqrt(math.pi)) < 1e-14
