import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupled_nehari.discretize import BlockFunction, energy
from coupled_nehari.minimize import SolverConfig, minimize_psi
from coupled_nehari.model import make_spec
from coupled_nehari.nehari import (NehariCoefficients, OutsideDomainError, ZeroBlockError, coefficients,
                                   evaluate_psi, nehari_residuals, project_to_nehari, psi, psi_gradient,
                                   pairing, block_inner, solve_scales, to_unit_blocks)
from coupled_nehari.oracle import fd_gradient_check, grid_search_scales
from helpers import random_b1_beta, random_block_function, random_field


def coeff_sets(draw_q=st.integers(1, 3), p=st.sampled_from([1.25, 1.5, 1.75, 2.0])):
    """Coefficient sets with the sign pattern and an interior maximiser."""

    @st.composite
    def build(draw):
        q = draw(draw_q)
        pp = draw(p)
        a = np.array([draw(st.floats(0.2, 2.0)) for _ in range(q)])
        b = np.array([draw(st.floats(0.2, 2.0)) for _ in range(q)])
        d = np.zeros((q, q))
        for h in range(q):
            for k in range(h + 1, q):
                # small enough that the 2p-homogeneous part stays negative definite
                d[h, k] = d[k, h] = draw(st.floats(0.0, 0.8)) * min(b[h], b[k]) / max(q - 1, 1)
        return NehariCoefficients(a, b, d, pp)

    return build()


class TestCoefficients:
    def test_scalar_example(self, ball128, rng):
        dd, dom = ball128
        v = random_field(rng, dom, 1)[0]
        v /= dom.integrate(np.abs(v) ** 3) ** (1 / 3)
        grad_sq = dom.inner(v, v, 0.0)
        lam = (2.0 - grad_sq) / dom.integrate(v**2)
        spec = make_spec(1.5, [lam], [[1.0]])
        c = coefficients(BlockFunction(dom, v[None, :]), spec)
        assert c.a[0] == pytest.approx(1.0, rel=1e-12)
        assert c.b[0] == pytest.approx(1 / 3, rel=1e-12)

    def test_disjoint_supports_give_zero_d(self, ball128):
        dd, dom = ball128
        r = dom.r
        vals = np.vstack([np.where(r < 0.4, np.sin(np.pi * r / 0.4), 0), np.where(r > 0.5, np.sin(np.pi * (r - 0.5) / 0.5), 0)])
        spec = make_spec(1.5, [1, 1], [[1, -0.5], [-0.5, 1]], (0, 1, 2))
        c = coefficients(BlockFunction(dom, dom.apply_bc(vals), (0, 1, 2)), spec)
        assert not np.any(c.d)

    def test_zero_block_rejected(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 1], [[1, -0.5], [-0.5, 1]], (0, 1, 2))
        vals = random_field(rng, dom, 2)
        vals[1] = 0
        with pytest.raises(ZeroBlockError):
            coefficients(BlockFunction(dom, vals, (0, 1, 2)), spec)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            NehariCoefficients(np.array([1.0, -1.0]), np.array([1.0, 1.0]), np.zeros((2, 2)), 1.5)
        with pytest.raises(ValueError):
            NehariCoefficients(np.ones(2), np.ones(2), np.array([[0, 1.0], [0.5, 0]]), 1.5)


class TestSolveScales:
    def test_scalar_closed_form(self):
        c = NehariCoefficients(np.array([1.0]), np.array([0.25]), np.zeros((1, 1)), 2.0)
        assert solve_scales(c).s[0] == pytest.approx(np.sqrt(2), rel=1e-14)
        c = NehariCoefficients(np.array([1.0]), np.array([0.25]), np.zeros((1, 1)), 1.5)
        assert solve_scales(c).s[0] == pytest.approx((1 / 0.375) ** 1.0, rel=1e-13)

    def test_decoupled_blocks(self):
        c = NehariCoefficients(np.array([1.0, 2.0]), np.array([0.3, 0.4]), np.zeros((2, 2)), 1.5)
        assert np.allclose(solve_scales(c).s, c.decoupled_scales(), rtol=1e-13)

    def test_matches_grid_oracle(self):
        c = NehariCoefficients(np.array([1.0, 1.0]), np.array([0.3, 0.4]), np.array([[0, 0.05], [0.05, 0]]), 1.5)
        # frozen output of grid_search_scales (box (0, 10], resolution 1e-3, then refined)
        frozen = np.array([2.5232811096813546, 2.019251211051584])
        assert np.max(np.abs(solve_scales(c).s - frozen)) < 1e-5
        assert np.max(np.abs(grid_search_scales(c).s - frozen)) < 1e-12

    def test_escape_p2(self):
        c = NehariCoefficients(np.ones(2), np.array([0.1, 0.1]), np.array([[0, 0.2], [0.2, 0]]), 2.0)
        assert solve_scales(c) is None

    def test_escape_p_below_two(self):
        c = NehariCoefficients(np.ones(2), np.array([0.1, 0.1]), np.array([[0, 1.0], [1.0, 0]]), 1.5)
        assert solve_scales(c) is None

    def test_rejects_wrong_signs(self):
        c = NehariCoefficients(np.ones(2), np.ones(2), np.array([[0, -0.1], [-0.1, 0]]), 1.5)
        with pytest.raises(ValueError):
            solve_scales(c)

    @settings(max_examples=200, deadline=None)
    @given(c=coeff_sets(), seed=st.integers(0, 2**31))
    def test_unique_from_random_starts(self, c, seed):
        ref = solve_scales(c)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            s = solve_scales(c, start=ref.s * np.exp(rng.uniform(-2, 2, size=c.q)), verify_samples=0)
            assert np.max(np.abs(s.s / ref.s - 1)) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(c=coeff_sets(), seed=st.integers(0, 2**31))
    def test_global_max(self, c, seed):
        s = solve_scales(c).s
        rng = np.random.default_rng(seed)
        J0 = c.value(s)
        trial = rng.uniform(0, 4 * s.max(), size=(10_000, c.q))
        sp = trial**c.p
        vals = trial**2 @ c.a - sp**2 @ c.b + np.einsum("ij,jk,ik->i", sp, c.d, sp)
        assert np.all(vals <= J0 + 1e-12 * abs(J0))


class TestProjection:
    def test_fixed_point_and_scaling_invariance(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 1, 0.5], random_b1_beta(rng, (0, 2, 3)), (0, 2, 3))
        u = random_block_function(rng, spec, dom)
        v = project_to_nehari(u, spec)
        again = project_to_nehari(v, spec)
        assert np.max(np.abs(again.values - v.values)) <= 1e-9 * np.max(np.abs(v.values))
        scaled = project_to_nehari(u.scaled([3.0, 0.2]), spec)
        assert np.max(np.abs(scaled.values - v.values)) <= 1e-9 * np.max(np.abs(v.values))

    @pytest.mark.parametrize("p", [1.25, 1.5, 2.0])
    def test_random_cooperative_residuals(self, ball128, rng, p):
        dd, dom = ball128
        for _ in range(5):
            spec = make_spec(p, rng.uniform(0, 2, 3), random_b1_beta(rng, (0, 3)))
            v = project_to_nehari(random_block_function(rng, spec, dom), spec)
            assert np.max(np.abs(nehari_residuals(v, spec))) <= 1e-9
            assert energy(v, spec) == pytest.approx(spec.nehari_factor * sum(v.block_norms_sq(spec.lam)),
                                                    rel=1e-10)


class TestPsi:
    def test_scalar_closed_form(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1.0], [[2.0]])
        u = to_unit_blocks(random_block_function(rng, spec, dom), spec)
        b = 2.0 * dom.integrate(np.abs(u.values[0]) ** 3) / 3
        s = (0.5 / (1.5 * b)) ** 1.0
        assert psi(u, spec) == pytest.approx(spec.nehari_factor * s**2, rel=1e-12)

    def test_positive_and_identity(self, ball128, rng):
        dd, dom = ball128
        for p in (1.25, 1.5, 2.0):
            spec = make_spec(p, [1, 1, 1], random_b1_beta(rng, (0, 1, 3)), (0, 1, 3))
            ev = evaluate_psi(random_block_function(rng, spec, dom), spec)
            assert ev.value > 0
            assert abs(energy(ev.point, spec) - ev.value) <= 1e-10 * ev.value

    def test_outside_domain_signalled(self, ball128):
        dd, dom = ball128
        # strong competition with identical profiles: the p=2 linear system has no positive solution
        spec = make_spec(2.0, [1, 1], [[0.1, -2.0], [-2.0, 0.1]], (0, 1, 2))
        u = BlockFunction(dom, np.vstack([np.sin(np.pi * dom.r)] * 2), (0, 1, 2))
        with pytest.raises(OutsideDomainError):
            psi(u, spec)

    def test_gradient_tangent(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 0.5, 1], random_b1_beta(rng, (0, 2, 3)), (0, 2, 3))
        u = to_unit_blocks(random_block_function(rng, spec, dom), spec)
        g = psi_gradient(u, spec)
        assert np.max(np.abs(block_inner(g, u, spec.lam))) <= 1e-12 * max(1.0, np.sqrt(pairing(g, g, spec.lam)))

    def test_gradient_finite_differences(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 0.5, 1], random_b1_beta(rng, (0, 2, 3)), (0, 2, 3))
        u = to_unit_blocks(random_block_function(rng, spec, dom), spec)
        v = random_block_function(rng, spec, dom, positive=False)
        assert fd_gradient_check(u, v, "psi", spec) <= 1e-4

    def test_gradient_vanishes_at_solution(self, ball128):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 1], [[1, 0.4], [0.4, 2]])
        u, rep = minimize_psi(spec, dom, SolverConfig(restart_count=1, gradient_tolerance=1e-9))
        g = psi_gradient(to_unit_blocks(u, spec), spec)
        assert np.sqrt(pairing(g, g, spec.lam)) <= 1e-7
