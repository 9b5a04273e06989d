import numpy as np
import pytest

from moprox import (
    ConfigError,
    EvaluationError,
    InputError,
    NonsmoothTerm,
    ProblemInstance,
    SmoothObjective,
    eval_full,
    eval_smooth,
    prox_nonsmooth,
)
from moprox.zoo import logsumexp_objective, quadratic_objective

from conftest import fd_gradient, fd_hessian


RNG = np.random.Generator(np.random.PCG64(101))


class TestSmoothObjective:
    def test_quadratic_oracle_matches_finite_differences(self):
        A = np.array([[2.0, 0.5], [0.5, 1.5]])
        b = np.array([1.0, -2.0])
        obj = quadratic_objective(A, b)
        x = np.array([0.3, -0.7])
        v, g, H = obj.evaluate(x)
        assert v == pytest.approx(0.5 * x @ A @ x - b @ x)
        assert np.max(np.abs(g - fd_gradient(obj.evaluate, x))) < 1e-5
        assert np.max(np.abs(H - fd_hessian(obj.evaluate, x))) < 1e-4

    def test_logsumexp_oracle_matches_finite_differences(self):
        rows = RNG.standard_normal((4, 3))
        offsets = RNG.standard_normal(4)
        center = RNG.standard_normal(3)
        obj = logsumexp_objective(rows, offsets, 1.0, center)
        x = RNG.standard_normal(3)
        _, g, H = obj.evaluate(x)
        assert np.max(np.abs(g - fd_gradient(obj.evaluate, x))) < 1e-5
        assert np.max(np.abs(H - fd_hessian(obj.evaluate, x))) < 1e-4

    def test_logsumexp_no_overflow_at_large_arguments(self):
        obj = logsumexp_objective(np.array([[10.0]]), np.array([0.0]), 1.0,
                                  np.array([0.0]))
        v, g, H = obj.evaluate(np.array([100.0]))
        assert np.isfinite(v) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))

    def test_hessian_symmetrized_at_boundary(self):
        def fn(x):
            return 0.0, np.zeros(2), np.array([[1.0, 2.0], [0.0, 1.0]])

        _, _, H = SmoothObjective(fn).evaluate(np.zeros(2))
        assert np.array_equal(H, H.T)
        assert H[0, 1] == 1.0

    def test_bad_oracle_shapes_rejected(self):
        def fn(x):
            return 0.0, np.zeros(3), np.eye(2)

        with pytest.raises(EvaluationError):
            SmoothObjective(fn).evaluate(np.zeros(2))


class TestNonsmoothTerm:
    def test_zero_term(self):
        t = NonsmoothTerm.zero()
        x = RNG.standard_normal(4)
        assert t.value(x) == 0.0
        assert np.array_equal(t.prox(x, 2.0), x)

    def test_l1_value_and_prox_closed_form(self):
        t = NonsmoothTerm.scaled_l1(0.5)
        assert t.value(np.array([1.0, -2.0, 0.0])) == pytest.approx(1.5)
        # soft threshold with c*rho = 1
        out = t.prox(np.array([3.0, -0.5, 1.0, -4.0]), 2.0)
        assert np.allclose(out, [2.0, 0.0, 0.0, -3.0])

    def test_l1_zero_weight_is_identity_prox(self):
        t = NonsmoothTerm.scaled_l1(0.0)
        v = RNG.standard_normal(5)
        assert np.array_equal(t.prox(v, 1.0), v)

    def test_box_value_inf_outside(self):
        t = NonsmoothTerm.box(-np.ones(2), np.ones(2))
        assert t.value(np.array([0.5, -1.0])) == 0.0
        assert t.value(np.array([1.5, 0.0])) == np.inf

    def test_box_value_tolerates_ulp_excursions(self):
        t = NonsmoothTerm.box(-np.ones(1), np.ones(1))
        x = np.array([1.0 + np.finfo(float).eps])
        assert t.value(x) == 0.0

    def test_box_prox_clips(self):
        t = NonsmoothTerm.box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
        out = t.prox(np.array([-3.0, 5.0]), 0.7)
        assert np.array_equal(out, [-1.0, 2.0])

    @pytest.mark.parametrize("term", [
        NonsmoothTerm.scaled_l1(0.8),
        NonsmoothTerm.box(-np.ones(6), np.ones(6)),
    ])
    def test_prox_firmly_nonexpansive(self, term):
        rng = np.random.Generator(np.random.PCG64(7))
        for _ in range(50):
            a = 3.0 * rng.standard_normal(6)
            b = 3.0 * rng.standard_normal(6)
            pa = term.prox(a, 1.3)
            pb = term.prox(b, 1.3)
            lhs = float(np.dot(pa - pb, pa - pb))
            rhs = float(np.dot(a - b, pa - pb))
            assert lhs <= rhs + 1e-12

    def test_prox_requires_positive_step(self):
        with pytest.raises(InputError):
            NonsmoothTerm.zero().prox(np.zeros(2), 0.0)
        with pytest.raises(InputError):
            NonsmoothTerm.scaled_l1(1.0).prox(np.zeros(2), -1.0)

    def test_constructor_validation(self):
        with pytest.raises(ConfigError):
            NonsmoothTerm.scaled_l1(-0.1)
        with pytest.raises(ConfigError):
            NonsmoothTerm.box(np.array([1.0]), np.array([0.0]))
        with pytest.raises(ConfigError):
            NonsmoothTerm.box(np.array([np.nan]), np.array([1.0]))

    def test_subdiff_residual_l1(self):
        t = NonsmoothTerm.scaled_l1(1.0)
        # at u > 0 the subdifferential is {rho}; residual |r + rho|
        assert t.subdiff_residual(np.array([2.0]), np.array([-1.0])) == pytest.approx(0.0)
        assert t.subdiff_residual(np.array([2.0]), np.array([0.5])) == pytest.approx(1.5)
        # at u = 0 the subdifferential is [-rho, rho]
        assert t.subdiff_residual(np.array([0.0]), np.array([0.7])) == pytest.approx(0.0)
        assert t.subdiff_residual(np.array([0.0]), np.array([1.7])) == pytest.approx(0.7)

    def test_subdiff_residual_box(self):
        t = NonsmoothTerm.box(-np.ones(1), np.ones(1))
        # interior: subdifferential {0}
        assert t.subdiff_residual(np.array([0.2]), np.array([0.4])) == pytest.approx(0.4)
        # residual is dist(-r, normal cone); the upper cone [0, inf) absorbs r <= 0
        assert t.subdiff_residual(np.array([1.0]), np.array([-2.0])) == pytest.approx(0.0)
        assert t.subdiff_residual(np.array([1.0]), np.array([3.0])) == pytest.approx(3.0)

    def test_same_as(self):
        assert NonsmoothTerm.zero().same_as(NonsmoothTerm.zero())
        assert NonsmoothTerm.scaled_l1(1.0).same_as(NonsmoothTerm.scaled_l1(1.0))
        assert not NonsmoothTerm.scaled_l1(1.0).same_as(NonsmoothTerm.scaled_l1(2.0))
        assert not NonsmoothTerm.zero().same_as(NonsmoothTerm.scaled_l1(0.0))
        b1 = NonsmoothTerm.box(-np.ones(2), np.ones(2))
        b2 = NonsmoothTerm.box(-np.ones(2), 2.0 * np.ones(2))
        assert not b1.same_as(b2)

    def test_prox_nonsmooth_wrapper(self):
        t = NonsmoothTerm.scaled_l1(1.0)
        assert np.allclose(prox_nonsmooth(t, [2.0, -0.5], 1.0), [1.0, 0.0])


def _quad_instance(m=2, n=3, seed=5):
    rng = np.random.Generator(np.random.PCG64(seed))
    smooth = []
    for _ in range(m):
        M = rng.standard_normal((n, n))
        A = M @ M.T + n * np.eye(n)
        smooth.append(quadratic_objective(A, rng.standard_normal(n)))
    return ProblemInstance(n=n, m=m, smooth=tuple(smooth),
                           nonsmooth=tuple(NonsmoothTerm.zero() for _ in range(m)),
                           mu=1.0)


class TestProblemInstance:
    def test_mixed_nonsmooth_terms_rejected(self):
        base = _quad_instance()
        with pytest.raises(ConfigError):
            ProblemInstance(n=base.n, m=2, smooth=base.smooth,
                            nonsmooth=(NonsmoothTerm.zero(), NonsmoothTerm.scaled_l1(1.0)),
                            mu=1.0)

    def test_count_and_mu_validation(self):
        base = _quad_instance()
        with pytest.raises(ConfigError):
            ProblemInstance(n=base.n, m=3, smooth=base.smooth, nonsmooth=base.nonsmooth,
                            mu=1.0)
        with pytest.raises(ConfigError):
            ProblemInstance(n=base.n, m=2, smooth=base.smooth, nonsmooth=base.nonsmooth,
                            mu=0.0)

    def test_eval_smooth_stacks_and_validates(self):
        prob = _quad_instance()
        x = RNG.standard_normal(3)
        se = eval_smooth(prob, x)
        assert se.values.shape == (2,)
        assert se.gradients.shape == (2, 3)
        assert se.hessians.shape == (2, 3, 3)
        v0, g0, H0 = prob.smooth[0].evaluate(x)
        assert se.values[0] == v0
        assert np.array_equal(se.gradients[0], g0)
        assert np.array_equal(se.hessians[0], H0)

    def test_eval_smooth_rejects_nonfinite_oracle(self):
        def bad(x):
            return np.inf, np.zeros(1), np.eye(1)

        prob = ProblemInstance(n=1, m=1, smooth=(SmoothObjective(bad),),
                               nonsmooth=(NonsmoothTerm.zero(),), mu=1.0)
        with pytest.raises(EvaluationError) as exc:
            eval_smooth(prob, np.zeros(1))
        assert exc.value.objective_index == 0

    def test_eval_full_adds_indicator(self):
        prob = _quad_instance()
        box = NonsmoothTerm.box(-0.5 * np.ones(3), 0.5 * np.ones(3))
        prob = ProblemInstance(n=3, m=2, smooth=prob.smooth,
                               nonsmooth=(box, box), mu=1.0)
        inside = eval_full(prob, np.zeros(3))
        assert np.all(np.isfinite(inside))
        outside = eval_full(prob, np.ones(3))
        assert np.all(np.isinf(outside))

    def test_point_validation(self):
        prob = _quad_instance()
        with pytest.raises(InputError):
            eval_full(prob, np.zeros(4))
        with pytest.raises(InputError):
            eval_full(prob, np.array([np.nan, 0.0, 0.0]))
        with pytest.raises(InputError):
            eval_full(prob, np.zeros((3, 1)))
