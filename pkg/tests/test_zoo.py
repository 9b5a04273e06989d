import numpy as np
import pytest

from moprox import (
    ConfigError,
    InstanceSpec,
    NonsmoothTerm,
    attach_nonsmooth,
    eval_smooth,
    gen_logsumexp_reg,
    gen_quadratic,
    generate_instance,
)
from moprox.zoo import FAMILIES

from conftest import fd_gradient, fd_hessian


class TestInstanceSpec:
    def test_families_frozen(self):
        assert FAMILIES == ("quadratic", "quadratic_l1", "quadratic_box",
                            "logsumexp")

    def test_validation(self):
        with pytest.raises(ConfigError):
            InstanceSpec(family="cubic", n=2, m=1)
        with pytest.raises(ConfigError):
            InstanceSpec(family="quadratic", n=0, m=1)
        with pytest.raises(ConfigError):
            InstanceSpec(family="quadratic", n=2, m=0)
        with pytest.raises(ConfigError):
            InstanceSpec(family="quadratic", n=2, m=1, cond=0.5)
        with pytest.raises(ConfigError):
            InstanceSpec(family="quadratic", n=2, m=1, mu=0.0)
        with pytest.raises(ConfigError):
            InstanceSpec(family="quadratic_l1", n=2, m=1, rho=-1.0)
        with pytest.raises(ConfigError):
            InstanceSpec(family="quadratic_box", n=2, m=1, lo=1.0, hi=-1.0)


class TestGenQuadratic:
    def test_deterministic(self):
        spec = InstanceSpec(family="quadratic", n=5, m=2, cond=100.0, seed=17)
        a = generate_instance(spec)
        b = generate_instance(spec)
        x = np.linspace(-1.0, 1.0, 5)
        ea, eb = eval_smooth(a, x), eval_smooth(b, x)
        assert np.array_equal(ea.values, eb.values)
        assert np.array_equal(ea.gradients, eb.gradients)
        assert np.array_equal(ea.hessians, eb.hessians)

    def test_spectrum_pinned_to_mu_and_cond(self):
        spec = InstanceSpec(family="quadratic", n=8, m=3, cond=1e4, mu=2.0,
                            seed=1)
        prob = generate_instance(spec)
        se = eval_smooth(prob, np.zeros(8))
        for H in se.hessians:
            eigs = np.linalg.eigvalsh(H)
            assert eigs.min() == pytest.approx(2.0, rel=1e-10)
            assert eigs.max() == pytest.approx(2.0e4, rel=1e-10)
            assert np.all(eigs >= 2.0 - 1e-8)

    def test_scalar_instance_hessian_is_mu(self):
        spec = InstanceSpec(family="quadratic", n=1, m=2, mu=3.0, seed=0)
        prob = generate_instance(spec)
        se = eval_smooth(prob, np.zeros(1))
        assert np.allclose(se.hessians, 3.0)
        assert prob.lip_grad == 3.0

    def test_lip_grad_matches_top_eigenvalue(self):
        spec = InstanceSpec(family="quadratic", n=6, m=2, cond=50.0, seed=11)
        prob = generate_instance(spec)
        se = eval_smooth(prob, np.zeros(6))
        top = max(np.linalg.eigvalsh(H).max() for H in se.hessians)
        assert top <= prob.lip_grad * (1.0 + 1e-10)
        assert prob.lip_hess == 0.0

    def test_explicit_shifts_set_minima(self):
        spec = InstanceSpec(family="quadratic", n=1, m=2, mu=1.0, seed=0)
        prob = gen_quadratic(spec, shifts=np.array([[1.0], [-1.0]]))
        se = eval_smooth(prob, np.array([2.0]))
        assert np.allclose(se.gradients[:, 0], [1.0, 3.0])
        # each objective is minimized at its shift
        for i, shift in enumerate((1.0, -1.0)):
            _, g, _ = prob.smooth[i].evaluate(np.array([shift]))
            assert abs(g[0]) < 1e-12


class TestGenLogsumexp:
    def test_oracles_match_finite_differences(self):
        spec = InstanceSpec(family="logsumexp", n=4, m=2, mu=1.0, seed=5)
        prob = generate_instance(spec)
        rng = np.random.Generator(np.random.PCG64(5))
        x = rng.standard_normal(4)
        for obj in prob.smooth:
            _, g, H = obj.evaluate(x)
            assert np.max(np.abs(g - fd_gradient(obj.evaluate, x))) < 1e-5
            assert np.max(np.abs(H - fd_hessian(obj.evaluate, x))) < 1e-3

    def test_curvature_between_mu_and_lip_grad(self):
        spec = InstanceSpec(family="logsumexp", n=5, m=2, mu=0.7, seed=9)
        prob = generate_instance(spec)
        rng = np.random.Generator(np.random.PCG64(9))
        for _ in range(5):
            x = 2.0 * rng.standard_normal(5)
            se = eval_smooth(prob, x)
            for H in se.hessians:
                eigs = np.linalg.eigvalsh(H)
                assert eigs.min() >= 0.7 - 1e-9
                assert eigs.max() <= prob.lip_grad + 1e-9

    def test_lip_hess_estimate_finite_and_stable(self):
        spec = InstanceSpec(family="logsumexp", n=6, m=2, mu=1.0, seed=2)
        a = gen_logsumexp_reg(spec)
        b = gen_logsumexp_reg(spec)
        assert a.lip_hess is not None and np.isfinite(a.lip_hess)
        assert a.lip_hess > 0.0
        assert a.lip_hess == b.lip_hess

    def test_deterministic(self):
        spec = InstanceSpec(family="logsumexp", n=3, m=2, mu=1.0, seed=8)
        x = np.array([0.3, -0.2, 0.9])
        ea = eval_smooth(generate_instance(spec), x)
        eb = eval_smooth(generate_instance(spec), x)
        assert np.array_equal(ea.values, eb.values)


class TestDispatchAndAttach:
    def test_quadratic_gets_zero_terms(self):
        prob = generate_instance(InstanceSpec(family="quadratic", n=2, m=2, seed=0))
        assert all(t.kind == NonsmoothTerm.KIND_ZERO for t in prob.nonsmooth)

    def test_l1_family_carries_rho(self):
        prob = generate_instance(
            InstanceSpec(family="quadratic_l1", n=2, m=2, rho=0.3, seed=0))
        assert all(t.kind == NonsmoothTerm.KIND_L1 for t in prob.nonsmooth)
        assert prob.nonsmooth[0].rho == 0.3

    def test_box_family_carries_bounds(self):
        prob = generate_instance(
            InstanceSpec(family="quadratic_box", n=3, m=2, seed=0,
                         lo=-0.25, hi=0.75))
        t = prob.nonsmooth[0]
        assert t.kind == NonsmoothTerm.KIND_BOX
        assert np.allclose(t.lo, -0.25)
        assert np.allclose(t.hi, 0.75)

    def test_attach_nonsmooth_uniform_replace(self):
        prob = generate_instance(InstanceSpec(family="quadratic", n=2, m=3, seed=0))
        term = NonsmoothTerm.scaled_l1(0.9)
        out = attach_nonsmooth(prob, term)
        assert all(t.same_as(term) for t in out.nonsmooth)
        assert out.reference_solution is None
        with pytest.raises(ConfigError):
            attach_nonsmooth(prob, "l1")
