import numpy as np
import pytest

from coupled_nehari.discretize import DomainDescriptor, assemble
from coupled_nehari.minimize import SolverConfig, minimize_psi
from coupled_nehari.model import make_spec
from coupled_nehari.nehari import NehariCoefficients
from coupled_nehari.oracle import fd_gradient_check, grid_search_scales, multistart_energy, shooting_ground_state
from helpers import random_b1_beta, random_block_function


@pytest.fixture(scope="module")
def ball12():
    return assemble(DomainDescriptor("ball", 3, (0.0, 12.0), 4096))


class TestShooting:
    def test_reference_ground_state(self, ball12):
        sh = shooting_ground_state(ball12, 1.0, 2.0)
        # frozen: u(0) for -u'' - 2u'/r + u = u^3 on the radius-12 ball
        assert sh.parameter == pytest.approx(4.3373876812705525, rel=1e-10)
        assert sh.energy == pytest.approx(1.5037954781027942, rel=1e-9)
        assert np.all(sh.values[:-1] > 0)
        # the tail decays like exp(-r)/r
        r = ball12.r
        sel = (r > 5) & (r < 8)
        slope = np.polyfit(r[sel], np.log(sh.values[sel] * r[sel]), 1)[0]
        assert slope == pytest.approx(-1.0, abs=1e-2)

    def test_beta_scaling_law(self, ball12):
        base = shooting_ground_state(ball12, 1.0, 2.0).values
        scaled = shooting_ground_state(ball12, 1.0, 2.0, beta=4.0).values
        nodes = np.linspace(0, ball12.n - 400, 5).astype(int)
        assert np.allclose(scaled[nodes], base[nodes] * 4.0 ** -0.5, rtol=1e-9)

    def test_lambda_monotone(self, ball12):
        tops = [shooting_ground_state(ball12, lam, 2.0).parameter for lam in (0.5, 1.0, 2.0)]
        assert tops[0] < tops[1] < tops[2]

    def test_annulus(self):
        dom = assemble(DomainDescriptor("annulus", 3, (1.0, 2.0), 256))
        sh = shooting_ground_state(dom, 1.0, 1.5)
        assert sh.values[0] == 0 and sh.values[-1] == 0
        assert np.all(sh.values[1:-1] > 0)


class TestGridSearch:
    def test_scalar_closed_form(self):
        c = NehariCoefficients(np.array([1.0]), np.array([0.25]), np.zeros((1, 1)), 2.0)
        assert grid_search_scales(c).s[0] == pytest.approx(np.sqrt(2), abs=1e-8)

    def test_decoupled(self):
        c = NehariCoefficients(np.array([1.0, 0.5]), np.array([0.3, 0.4]), np.zeros((2, 2)), 1.5)
        assert np.allclose(grid_search_scales(c).s, c.decoupled_scales(), atol=1e-8)

    def test_two_resolutions_agree(self):
        c = NehariCoefficients(np.array([1.0, 1.0]), np.array([0.3, 0.4]), np.array([[0, 0.05], [0.05, 0]]), 1.5)
        fine = grid_search_scales(c, resolution=1e-3).s
        coarse = grid_search_scales(c, resolution=1e-2).s
        assert np.max(np.abs(fine - coarse)) < 1e-5

    def test_boundary_reported(self):
        c = NehariCoefficients(np.array([1.0]), np.array([1e-4]), np.zeros((1, 1)), 2.0)
        assert grid_search_scales(c).on_boundary


class TestFiniteDifferences:
    def test_quadratic(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 0.5], [[1, 0.2], [0.2, 1]])
        u = random_block_function(rng, spec, dom)
        v = random_block_function(rng, spec, dom, positive=False)
        assert fd_gradient_check(u, v, "quadratic", spec) <= 1e-10

    def test_energy_and_psi(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 0.5, 1], random_b1_beta(rng, (0, 2, 3)), (0, 2, 3))
        u = random_block_function(rng, spec, dom)
        v = random_block_function(rng, spec, dom, positive=False)
        assert fd_gradient_check(u, v, "energy", spec) <= 1e-5
        assert fd_gradient_check(u, v, "psi", spec) <= 1e-4

    def test_unknown(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [1], [[1]])
        u = random_block_function(rng, spec, dom)
        with pytest.raises(ValueError):
            fd_gradient_check(u, u, "kinetic", spec)


class TestMultistart:
    def test_scalar_spread_and_minimiser(self, ball128):
        dd, dom = ball128
        spec = make_spec(2.0, [1.0], [[1.0]])
        dist = multistart_energy(spec, dom)
        assert (dist[-1] - dist[0]) <= 1e-6 * dist[0]
        _, rep = minimize_psi(spec, dom, SolverConfig(restart_count=2))
        assert rep.energy <= dist[0] + 1e-8

    def test_decoupled_is_separable(self, ball128):
        dd, dom = ball128
        spec = make_spec(1.5, [1.0, 2.0], np.diag([1.0, 2.0]), (0, 1, 2))
        dist = multistart_energy(spec, dom)
        singles = [multistart_energy(make_spec(1.5, [lam], [[b]]), dom)[0] for lam, b in ((1.0, 1.0), (2.0, 2.0))]
        assert dist[0] == pytest.approx(sum(singles), rel=1e-8)
        _, rep = minimize_psi(spec, dom, SolverConfig(restart_count=2))
        assert rep.energy == pytest.approx(sum(singles), rel=1e-8)

    def test_needs_eight_starts(self, ball128):
        dd, dom = ball128
        with pytest.raises(ValueError):
            multistart_energy(make_spec(2.0, [1.0], [[1.0]]), dom, k=4)
