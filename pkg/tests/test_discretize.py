import numpy as np
import pytest

from coupled_nehari.discretize import (BlockFunction, DomainDescriptor, assemble, energy, energy_gradient,
                                       fields_from_csv, fields_to_csv, mixed_integral, norm_sq,
                                       smallest_eigenvalue)
from coupled_nehari.model import make_spec
from coupled_nehari.oracle import shooting_ground_state
from helpers import random_field


def interval(n):
    return assemble(DomainDescriptor("interval", 1, (0.0, 1.0), n))


def observed_order(values, exact):
    err = np.abs(np.asarray(values) - exact)
    return np.log2(err[:-1] / err[1:])


class TestDescriptor:
    @pytest.mark.parametrize("kw", [dict(kind="disk", N=2, radii=(0, 1)), dict(kind="ball", N=3, radii=(0.5, 1)),
                                    dict(kind="annulus", N=3, radii=(0, 1)), dict(kind="ball", N=3, radii=(0, 1),
                                                                                  grid_points=8)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            DomainDescriptor(**kw)

    def test_roundtrip(self):
        dd = DomainDescriptor("annulus", 4, (1.0, 3.0), 100)
        assert DomainDescriptor.from_dict(dd.to_dict()) == dd


class TestIntegrals:
    def test_norm_of_zero(self):
        d = interval(64)
        assert norm_sq(np.zeros(d.n), d, 1.0) == 0.0

    def test_sine_norm_second_order(self):
        vals = []
        for n in (128, 256, 512):
            d = interval(n)
            vals.append(norm_sq(np.sin(np.pi * d.r), d, 0.0))
        order = observed_order(vals, np.pi**2 / 2)
        assert abs(vals[-1] - np.pi**2 / 2) < 1e-4
        assert np.all((order > 1.8) & (order < 2.2))

    def test_mixed_integral_cases(self, rng):
        d = interval(200)
        u = np.where(d.r < 0.4, 1.0, 0.0)
        v = np.where(d.r > 0.6, 1.0, 0.0)
        assert mixed_integral(u, v, 1.5, d) == 0.0
        f = rng.normal(size=d.n)
        assert mixed_integral(f, f, 1.0, d) == pytest.approx(d.integrate(f**2))
        for p in (1.2, 1.5, 2.0):
            assert mixed_integral(np.ones(d.n), np.ones(d.n), p, d) == pytest.approx(1.0, rel=1e-12)

    def test_radial_measure(self):
        # weights are r^(N-1) dr; the sphere area is left out of every integral
        d = assemble(DomainDescriptor("ball", 3, (0.0, 1.0), 400))
        assert d.integrate(np.ones(d.n)) == pytest.approx(1 / 3, rel=1e-4)


class TestEnergy:
    def test_zero(self, ball128):
        dd, dom = ball128
        spec = make_spec(1.5, [1, 1], [[1, .2], [.2, 1]])
        u = BlockFunction(dom, np.zeros((2, dom.n)))
        assert energy(u, spec) == 0.0
        assert not np.any(energy_gradient(u, spec).values)

    def test_single_component_formula(self, ball128, rng):
        dd, dom = ball128
        spec = make_spec(1.5, [2.0], [[1.0]])
        v = random_field(rng, dom, 1)[0]
        expected = 0.5 * norm_sq(v, dom, 2.0) - dom.integrate(np.abs(v) ** 3) / 3
        assert energy(BlockFunction(dom, v[None, :]), spec) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.parametrize("p", [1.25, 1.5, 2.0])
    def test_gradient_central_difference(self, ball128, rng, p):
        dd, dom = ball128
        spec = make_spec(p, [1.0, 0.5], [[1.0, 0.3], [0.3, 2.0]])
        u = BlockFunction(dom, random_field(rng, dom, 2))
        w = BlockFunction(dom, random_field(rng, dom, 2, positive=False))
        weak = energy_gradient(u, spec, weak=True).values
        exact = float(np.sum(weak * w.values))
        eps = 1e-5
        fd = (energy(u.replace(u.values + eps * w.values), spec)
              - energy(u.replace(u.values - eps * w.values), spec)) / (2 * eps)
        assert abs(fd - exact) <= 1e-5 * abs(exact)

    def test_ground_state_residual_second_order(self):
        res = []
        for n in (256, 512, 1024):
            dom = assemble(DomainDescriptor("ball", 3, (0.0, 12.0), n))
            sh = shooting_ground_state(dom, 1.0, 2.0)
            spec = make_spec(2.0, [1.0], [[1.0]])
            res.append(np.max(np.abs(energy_gradient(BlockFunction(dom, sh.values[None, :]), spec).values)))
        order = np.log2(np.array(res[:-1]) / np.array(res[1:]))
        assert np.all((order > 1.8) & (order < 2.2))


class TestEigenvalue:
    @pytest.mark.parametrize("kind,N,radii", [("interval", 1, (0, 1)), ("ball", 3, (0, 1)), ("annulus", 3, (1, 2))])
    def test_converges_to_pi_squared(self, kind, N, radii):
        vals = [smallest_eigenvalue(assemble(DomainDescriptor(kind, N, radii, n))) for n in (100, 200, 400)]
        order = observed_order(vals, np.pi**2)
        assert abs(vals[-1] - np.pi**2) < 1e-3
        assert np.all((order > 1.8) & (order < 2.2))


def test_riesz_inverts_stiffness(ball128, rng):
    dd, dom = ball128
    v = random_field(rng, dom, 1)[0]
    lam = 0.7
    cov = dom.stiffness_apply(v) + lam * dom.weights * v
    back = dom.riesz(cov, lam)
    assert np.max(np.abs(back - v)) < 1e-10 * np.max(np.abs(v))


def test_csv_roundtrip(ball128, rng):
    dd, dom = ball128
    u = BlockFunction(dom, random_field(rng, dom, 3), (0, 2, 3))
    text = fields_to_csv(u, ["manifest {}"])
    assert text.startswith("# manifest")
    back = fields_from_csv(text, dom, (0, 2, 3))
    assert np.array_equal(back.values, u.values)
    with pytest.raises(ValueError):
        fields_from_csv(text, assemble(DomainDescriptor("ball", 3, (0, 1), 64)))
