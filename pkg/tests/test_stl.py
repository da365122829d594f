import math

import numpy as np
import pytest

from linewatch import stl
from oracles import boolean_satisfaction, brute_force_robustness, random_instance


def pred(coeffs, offset, label=None):
    return stl.LinearPredicate(np.asarray(coeffs, dtype=float), offset, label)


class TestExactRobustness:
    def test_affine_predicate(self):
        # x >= 2 encoded as mu = x - 2
        trace = stl.Trace(ts=1.0, samples=np.array([[5.0]]))
        assert stl.robustness(pred([1.0], 2.0), trace) == pytest.approx(3.0)

    def test_globally_min_semantics(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[1.0], [2.0], [-1.0]]))
        formula = stl.Globally(0, 2, pred([1.0], 0.0))
        assert stl.robustness(formula, trace) == pytest.approx(-1.0)

    def test_conjunction_of_temporal_operators(self):
        # Computed with the brute-force oracle: min(max(-1, 4, 2), min(4, -1, 1)) = -1
        samples = np.array([[-1.0], [4.0], [2.0]])
        trace = stl.Trace(ts=1.0, samples=samples)
        formula = stl.And(
            [
                stl.Eventually(0, 2, pred([1.0], 0.0)),
                stl.Globally(0, 2, pred([-1.0], -3.0)),  # x <= 3
            ]
        )
        expected = brute_force_robustness(formula, samples, 0)
        assert expected == pytest.approx(-1.0)
        assert stl.robustness(formula, trace) == pytest.approx(expected)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            formula, trace = random_instance(rng)
            got = stl.robustness(formula, trace, 0)
            want = brute_force_robustness(formula, trace.samples, 0)
            assert got == pytest.approx(want, abs=1e-12)

    def test_evaluation_at_later_steps(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            formula, trace = random_instance(rng, n_samples=16)
            for k in (0, 1, 2):
                got = stl.robustness(formula, trace, k)
                want = brute_force_robustness(formula, trace.samples, k)
                assert got == pytest.approx(want, abs=1e-12)

    def test_window_out_of_range_names_node(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[1.0], [2.0]]))
        formula = stl.Globally(0, 5, pred([1.0], 0.0), label="too-wide")
        with pytest.raises(stl.WindowError) as err:
            stl.robustness(formula, trace, 0)
        assert err.value.node is formula

    def test_sign_soundness_against_boolean_evaluator(self):
        rng = np.random.default_rng(1234)
        checked = 0
        while checked < 1000:
            formula, trace = random_instance(rng)
            rho = stl.robustness(formula, trace, 0)
            if abs(rho) <= 1e-9:
                continue
            checked += 1
            sat = boolean_satisfaction(formula, trace.samples, 0)
            assert (rho > 0) == sat


class TestCriticalNode:
    def test_picks_most_violated_branch(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[0.0], [0.0], [0.0]]))
        formula = stl.And(
            [
                stl.Globally(0, 2, pred([1.0], -1.0, label="ok")),  # x >= -1 -> +1
                stl.Eventually(0, 2, pred([1.0], 2.0, label="bad")),  # x >= 2 -> -2
            ]
        )
        crit = stl.critical_node(formula, trace)
        assert crit.label == "bad"
        assert crit.value == pytest.approx(-2.0)


class TestSmoothRobustness:
    def test_single_predicate_is_exact(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[5.0]]))
        p = pred([1.0], 2.0)
        assert stl.smooth_robustness(p, trace, 0, kappa=3.0) == stl.robustness(p, trace)

    def test_soft_max_closed_form(self):
        # Operand values {0, 1} with kappa=1: (1/1)*ln(e^0 + e^1)
        trace = stl.Trace(ts=1.0, samples=np.array([[0.0]]))
        formula = stl.Or([pred([1.0], 0.0), pred([1.0], -1.0)])
        got = stl.smooth_robustness(formula, trace, 0, kappa=1.0)
        assert got == pytest.approx(math.log(math.exp(0.0) + math.exp(1.0)), abs=1e-12)

    def test_soft_min_is_lower_bound_and_soft_max_upper(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[0.3]]))
        values = stl.And([pred([1.0], 0.0), pred([1.0], -1.0)])
        exact = stl.robustness(values, trace)
        assert stl.smooth_robustness(values, trace, 0, kappa=5.0) <= exact
        other = stl.Or([pred([1.0], 0.0), pred([1.0], -1.0)])
        assert stl.smooth_robustness(other, trace, 0, kappa=5.0) >= stl.robustness(other, trace)

    def test_smoothing_error_bound(self):
        rng = np.random.default_rng(7)
        for kappa in (10.0, 100.0, 1000.0):
            for _ in range(200):
                formula, trace = random_instance(rng)
                exact = stl.robustness(formula, trace, 0)
                smooth = stl.smooth_robustness(formula, trace, 0, kappa=kappa)
                depth = stl.operator_depth(formula)
                m = stl.max_operand_count(formula)
                bound = depth * math.log(max(m, 2)) / kappa
                assert abs(smooth - exact) <= bound + 1e-9

    def test_convergence_in_kappa(self):
        # Conjunctive trees have one-sided smoothing error, monotone in kappa.
        rng = np.random.default_rng(8)
        for _ in range(200):
            formula, trace = random_instance(rng)
            exact = stl.robustness(formula, trace, 0)
            err_k = abs(stl.smooth_robustness(formula, trace, 0, kappa=20.0) - exact)
            err_2k = abs(stl.smooth_robustness(formula, trace, 0, kappa=40.0) - exact)
            assert err_2k <= err_k + 1e-12

    def test_translation_equivariance(self):
        rng = np.random.default_rng(9)
        trace = stl.Trace(ts=1.0, samples=rng.normal(size=(4, 2)))
        base = pred([1.0, -0.5], 0.7)
        shifted = pred([1.0, -0.5], 0.7 + 2.5)
        for k in range(4):
            assert stl.robustness(shifted, trace, k) == pytest.approx(
                stl.robustness(base, trace, k) - 2.5, abs=1e-12
            )

    def test_kappa_must_be_positive(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[1.0]]))
        with pytest.raises(ValueError):
            stl.smooth_robustness(pred([1.0], 0.0), trace, 0, kappa=0.0)

    def test_child_order_does_not_change_value(self):
        rng = np.random.default_rng(10)
        samples = rng.normal(size=(6, 3))
        trace = stl.Trace(ts=1.0, samples=samples)
        kids = [pred(rng.normal(size=3), float(rng.normal())) for _ in range(5)]
        forward = stl.And(list(kids))
        backward = stl.And(list(reversed(kids)))
        a = stl.smooth_robustness(forward, trace, 0, kappa=13.0)
        b = stl.smooth_robustness(backward, trace, 0, kappa=13.0)
        assert a == b  # bitwise, thanks to value-sorted reduction


class TestSmoothGradient:
    def test_single_predicate_gradient(self):
        trace = stl.Trace(ts=1.0, samples=np.zeros((4, 3)))
        coeffs = np.array([1.0, -2.0, 0.5])
        g = stl.smooth_robustness_gradient(pred(coeffs, 1.0), trace, k=2, kappa=10.0)
        expected = np.zeros((4, 3))
        expected[2] = coeffs
        assert np.allclose(g, expected)

    def test_soft_max_weights_are_softmax(self):
        trace = stl.Trace(ts=1.0, samples=np.array([[0.0, 0.0]]))
        formula = stl.Or([pred([1.0, 0.0], 0.0), pred([0.0, 1.0], -1.0)])
        kappa = 2.0
        g = stl.smooth_robustness_gradient(formula, trace, 0, kappa=kappa)
        w = np.exp(kappa * np.array([0.0, 1.0]))
        w /= w.sum()
        assert np.allclose(g[0], w, atol=1e-12)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(11)
        h = 1e-5
        kappa = 10.0
        checked = 0
        while checked < 120:
            formula, trace = random_instance(rng, dim=3, n_samples=10)
            g = stl.smooth_robustness_gradient(formula, trace, 0, kappa=kappa)
            fd = np.zeros_like(trace.samples)
            for i in range(trace.n_samples):
                for j in range(trace.dim):
                    bumped = trace.samples.copy()
                    bumped[i, j] += h
                    up = stl.smooth_robustness(formula, stl.Trace(trace.ts, bumped), 0, kappa)
                    bumped[i, j] -= 2 * h
                    dn = stl.smooth_robustness(formula, stl.Trace(trace.ts, bumped), 0, kappa)
                    fd[i, j] = (up - dn) / (2 * h)
            scale = max(float(np.abs(fd).max()), 1e-8)
            if scale < 1e-4:
                continue
            checked += 1
            rel = float(np.abs(g - fd).max()) / scale
            assert rel <= 1e-4


def test_sexpr_dump_mentions_structure():
    formula = stl.And(
        [
            stl.Globally(0, 3, pred([1.0], 0.0, label="stay"), label="hold"),
            stl.Eventually(1, 2, pred([-1.0], -2.0)),
        ]
    )
    text = stl.to_sexpr(formula)
    assert text.startswith("(and ")
    assert "(G :hold 0 3" in text
    assert "(F 1 2" in text
    assert ":stay" in text
