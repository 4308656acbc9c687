"""Instance generators shared by the test modules."""
import numpy as np

from coupled_nehari.discretize import BlockFunction, DomainDescriptor, assemble
from coupled_nehari.model import make_spec


def small_ball(n=128, radius=1.0):
    dd = DomainDescriptor("ball", 3, (0.0, radius), n)
    return dd, assemble(dd)


def random_bounds(rng, ell, q):
    cuts = np.sort(rng.choice(np.arange(1, ell), size=q - 1, replace=False)) if q > 1 else []
    return (0, *[int(c) for c in cuts], ell)


def random_b1_beta(rng, bounds, intra=(0.0, 0.6), inter=(-0.6, 0.0), diag=(0.5, 2.0)):
    """Symmetric coupling with the block sign pattern."""
    ell = bounds[-1]
    block = np.zeros(ell, dtype=int)
    for h in range(len(bounds) - 1):
        block[bounds[h]:bounds[h + 1]] = h
    beta = np.zeros((ell, ell))
    for i in range(ell):
        beta[i, i] = rng.uniform(*diag)
        for j in range(i + 1, ell):
            lo, hi = intra if block[i] == block[j] else inter
            beta[i, j] = beta[j, i] = rng.uniform(lo, hi)
    return beta


def random_instance(rng, ell_max=4, q_max=3, ps=(1.25, 1.5, 2.0), domain=None):
    ell = int(rng.integers(1, ell_max + 1))
    q = int(rng.integers(1, min(q_max, ell) + 1))
    bounds = random_bounds(rng, ell, q)
    p = float(rng.choice(ps))
    beta = random_b1_beta(rng, bounds)
    lam = rng.uniform(0.0, 2.0, size=ell)
    return make_spec(p, lam, beta, bounds, domain)


def random_field(rng, domain, ell, positive=True):
    """Smooth random radial fields vanishing at the Dirichlet boundary."""
    r = domain.r
    r0, R = domain.descriptor.radii
    vals = np.zeros((ell, domain.n))
    for i in range(ell):
        for _ in range(3):
            c = rng.uniform(r0, R)
            w = rng.uniform(0.15, 0.6) * (R - r0)
            amp = rng.uniform(0.3, 1.5) if positive else rng.normal()
            vals[i] += amp * np.exp(-((r - c) / w) ** 2)
    return domain.apply_bc(vals)


def random_block_function(rng, spec, domain, positive=True):
    return BlockFunction(domain, random_field(rng, domain, spec.ell, positive), spec.bounds)
