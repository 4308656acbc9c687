import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupled_nehari.discretize import BlockFunction, energy_gradient
from coupled_nehari.minimize import euler_lagrange_residual
from coupled_nehari.model import make_spec
from coupled_nehari.oracle import shooting_ground_state
from coupled_nehari.synchronized import (interval_prediction, lemma_sync_p2_check, m_constraint, m_identity_report,
                                         project_to_M, solve_sync, sync_energy, sync_gradient,
                                         sync_p2_two_component, sync_residual, synchronize_with_pde)


class TestProjection:
    @pytest.mark.parametrize("p", [1.25, 1.5, 2.0])
    def test_scalar(self, p):
        assert project_to_M([2.0], [[1.0]], p).c[0] == pytest.approx(1.0, rel=1e-14)

    def test_fixed_point(self):
        beta = np.array([[1, 0.3], [0.3, 2]])
        c = project_to_M([0.7, 0.2], beta, 1.5).c
        assert np.allclose(project_to_M(c, beta, 1.5).c, c, rtol=1e-14)
        assert abs(m_constraint(c, beta, 1.5)) < 1e-14

    def test_nonpositive_interaction(self):
        assert project_to_M([1.0, 1.0], [[1, -2], [-2, 1]], 2.0) is None


class TestSolveSync:
    def test_decoupled_p2(self):
        cand = solve_sync(np.eye(2), 2.0)
        assert np.allclose(cand.c, [1, 1], atol=1e-12)
        # (1, 1) is a positive solution but not the minimiser on M
        assert not cand.is_minimizer
        assert np.count_nonzero(cand.minimizer > 1e-12) == 1

    def test_linear_squares(self):
        cand = solve_sync([[1, 3], [3, 1]], 2.0)
        assert np.allclose(cand.c, [0.5, 0.5], atol=1e-12)
        assert cand.residual <= 1e-10

    def test_residual_examples(self):
        assert sync_residual([1, 1], np.eye(2), 2.0) == 0.0
        assert sync_residual([0, 0], np.eye(2), 2.0) == 0.0

    def test_gradient_matches_energy(self, rng):
        beta = np.array([[1, 0.3, 0.1], [0.3, 2, 0.2], [0.1, 0.2, 1.5]])
        c = rng.uniform(0.2, 1, 3)
        v = rng.normal(size=3)
        eps = 1e-6
        fd = (sync_energy(c + eps * v, beta, 1.5) - sync_energy(c - eps * v, beta, 1.5)) / (2 * eps)
        assert fd == pytest.approx(sync_gradient(c, beta, 1.5) @ v, rel=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), ell=st.integers(2, 5), p=st.sampled_from([1.2, 1.5, 1.8]))
    def test_cooperative_positive(self, seed, ell, p):
        rng = np.random.default_rng(seed)
        beta = np.diag(rng.uniform(0.5, 2, ell))
        iu = np.triu_indices(ell, 1)
        beta[iu] = rng.uniform(0.01, 1, len(iu[0]))
        beta = beta + np.triu(beta, 1).T
        cand = solve_sync(beta, p)
        assert cand.positive and cand.is_minimizer
        assert cand.residual <= 1e-8

    def test_m_identity_constant(self):
        beta = np.array([[1, 0.4], [0.4, 1.3]])
        for p in (1.5, 2.0):
            cand = solve_sync(beta, p)
            rep = m_identity_report(cand.c, beta, p)
            assert rep["ratio"] == pytest.approx((p - 1) / (2 * p), rel=1e-10)


class TestTwoComponent:
    def test_inside_interval(self):
        v = sync_p2_two_component([[1, 0.5], [0.5, 2]])
        assert v.verdict == "positive"
        assert np.allclose(v.candidate.c, np.sqrt([6 / 7, 2 / 7]), atol=1e-13)
        assert v.candidate.residual <= 1e-14

    def test_minimality_against_semitrivial(self):
        cand = sync_p2_two_component([[1, 0.5], [0.5, 2]]).candidate
        assert not cand.is_minimizer
        assert np.allclose(cand.minimizer, [0, np.sqrt(0.5)])
        assert sync_p2_two_component([[1, 3], [3, 1]]).candidate.is_minimizer

    def test_gap(self):
        v = sync_p2_two_component([[1, 1.5], [1.5, 2]])
        assert v.verdict == "none" and v.candidate is None

    def test_decoupled(self):
        v = sync_p2_two_component([[1, 0], [0, 2]])
        assert np.allclose(v.candidate.c, [1, 1 / np.sqrt(2)], atol=1e-14)

    def test_degenerate(self):
        assert sync_p2_two_component([[1, np.sqrt(2)], [np.sqrt(2), 2]]).verdict == "degenerate"

    @pytest.mark.parametrize("b12,expected", [(-1.6, "none"), (-1.0, "positive"), (1.5, "none"),
                                              (2.5, "positive"), (1.0, None)])
    def test_interval_prediction(self, b12, expected):
        assert interval_prediction(1.0, 2.0, b12) == expected


class TestCouplingSumBound:
    def test_decoupled(self):
        assert lemma_sync_p2_check([1, 1], np.eye(2))["ok"]

    def test_cooperative_minimiser(self):
        rep = lemma_sync_p2_check([0.5, 0.5], [[1, 3], [3, 1]])
        assert rep["ok"] and rep["sums"] == pytest.approx([0.75, 0.75])

    def test_negative_control(self):
        rep = lemma_sync_p2_check([1.0, 0.0, 1.0], [[1, 0, 2], [0, 1, 3], [2, 3, 1]])
        assert not rep["ok"]


class TestCompose:
    def test_scalar_identity(self, ball256):
        dd, dom = ball256
        spec = make_spec(1.5, [1.0], [[1.0]])
        u = shooting_ground_state(dom, 1.0, 1.5).values
        _, sys_res, scalar_res = synchronize_with_pde([1.0], u, spec, dom)
        assert sys_res[0] == scalar_res

    def test_decoupled_p2_componentwise(self, ball256):
        dd, dom = ball256
        spec = make_spec(2.0, [1.0, 1.0], np.eye(2))
        u = shooting_ground_state(dom, 1.0, 2.0).values
        _, sys_res, scalar_res = synchronize_with_pde([1.0, 1.0], u, spec, dom)
        assert np.allclose(sys_res, scalar_res, rtol=1e-14)

    def test_cooperative_three(self, ball256):
        dd, dom = ball256
        beta = np.array([[1, 0.4, 0.2], [0.4, 1.5, 0.3], [0.2, 0.3, 2]])
        spec = make_spec(1.5, [1.0] * 3, beta)
        cand = solve_sync(beta, 1.5)
        u = shooting_ground_state(dom, 1.0, 1.5).values
        bf, sys_res, scalar_res = synchronize_with_pde(cand, u, spec, dom)
        assert np.max(sys_res) <= 10 * scalar_res
        assert np.allclose(euler_lagrange_residual(bf, spec), sys_res)

    def test_lambda_mismatch(self, ball256):
        dd, dom = ball256
        with pytest.raises(ValueError):
            synchronize_with_pde([1, 1], np.ones(dom.n), make_spec(2.0, [1.0, 2.0], np.eye(2)), dom)
