"""Slow, independent reference computations used to check the primary solvers.

Nothing here calls the scale solver, the reduced functional or the descent
code; the energy used by :func:`multistart_energy` is re-implemented from
the grid data of the domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .discretize import DiscreteDomain


@dataclass(frozen=True)
class OracleConfig:
    resolution: float = 1e-3
    polish_tol: float = 1e-11
    samples: int = 10_000
    seed: int = 0
    shooting_rtol: float = 1e-13

    def __post_init__(self):
        if min(self.resolution, self.polish_tol, self.samples, self.shooting_rtol) <= 0:
            raise ValueError("oracle parameters must be positive")


# -- brute-force scale search --------------------------------------------

def _scaling_energy(a, b, d, p, s):
    """``J_u(s)`` written out term by term (vectorised over the leading axes of ``s``)."""
    total = 0.0
    q = len(a)
    for h in range(q):
        total = total + a[h] * s[..., h] ** 2 - b[h] * s[..., h] ** (2 * p)
        for k in range(q):
            if k != h:
                total = total + d[h][k] * s[..., h] ** p * s[..., k] ** p
    return total


@dataclass(frozen=True)
class GridSearchResult:
    s: np.ndarray
    value: float
    on_boundary: bool


def grid_search_scales(coeffs, p: float | None = None, box: tuple[float, float] = (0.0, 10.0),
                       resolution: float = 1e-3, polish_tol: float = 1e-11) -> GridSearchResult:
    """Maximise ``J_u`` over a lattice in ``(lo, hi]^q``, zoom in, then polish by trisection.

    ``coeffs`` needs attributes ``a``, ``b``, ``d`` (and ``p`` when the
    argument is omitted). A coarse maximiser on the outer face of the box
    is flagged as a suspected escape.
    """
    a, b, d = (np.asarray(x, dtype=float) for x in (coeffs.a, coeffs.b, coeffs.d))
    p = float(coeffs.p if p is None else p)
    q = a.size
    if q > 3:
        raise ValueError("grid search is limited to q <= 3")
    lo, hi = box
    per_axis = {1: 20001, 2: 401, 3: 81}[q]
    axes = [np.linspace(lo, hi, per_axis)[1:]] * q
    f = lambda s: _scaling_energy(a, b, d, p, s)

    def best_on(axes):
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = f(mesh)
        idx = np.unravel_index(np.argmax(vals), vals.shape)
        return np.array([ax[i] for ax, i in zip(axes, idx)]), idx

    s, idx = best_on(axes)
    on_boundary = any(i == len(ax) - 1 for i, ax in zip(idx, axes))
    cell = (hi - lo) / (per_axis - 1)
    # zoom until the lattice spacing is below the requested resolution
    while cell > resolution:
        axes = [np.linspace(max(lo, x - 2 * cell), min(hi, x + 2 * cell), 41) for x in s]
        s, _ = best_on(axes)
        cell = 4 * cell / 40
    # coordinate trisection polish
    for _ in range(200):
        prev = s.copy()
        for h in range(q):
            left, right = max(lo, s[h] - 2 * cell), min(hi, s[h] + 2 * cell)
            while right - left > polish_tol * max(1.0, s[h]):
                m1 = left + (right - left) / 3
                m2 = right - (right - left) / 3
                t1, t2 = s.copy(), s.copy()
                t1[h], t2[h] = m1, m2
                if f(t1) < f(t2):
                    left = m1
                else:
                    right = m2
            s[h] = 0.5 * (left + right)
        if np.max(np.abs(s - prev)) < polish_tol:
            break
    return GridSearchResult(s, float(f(s)), bool(on_boundary))


# -- finite-difference derivative checks ----------------------------------

def fd_gradient_check(point, direction, functional: str, spec, epsilons=(1e-4, 1e-5, 1e-6)) -> float:
    """Best relative error between a central difference and the analytic pairing.

    ``functional`` is ``"energy"``, ``"psi"`` or ``"quadratic"`` (the
    ``1/2 sum ||u_i||_i**2`` part alone). For ``"psi"`` the direction is
    first made tangent to the block spheres at the unit representative of
    ``point``.
    """
    from . import discretize as D
    from . import nehari as N

    lam = spec.lam
    if functional == "quadratic":
        def value(u):
            return 0.5 * sum(D.norm_sq(u.values[i], u.domain, lam[i]) for i in range(u.ell))
        analytic = N.pairing(point, direction, lam)
    elif functional == "energy":
        value = lambda u: D.energy(u, spec)
        analytic = float(np.sum(D.energy_gradient(point, spec, weak=True).values * direction.values))
    elif functional == "psi":
        point = N.to_unit_blocks(point, spec)
        coef = N.block_inner(direction, point, lam)
        direction = direction.replace(direction.values - np.repeat(coef, np.diff(point.bounds))[:, None]
                                      * point.values)
        value = lambda u: N.psi(u, spec)
        analytic = N.pairing(N.psi_gradient(point, spec), direction, lam)
    else:
        raise ValueError(f"unknown functional {functional!r}")
    best = np.inf
    for eps in epsilons:
        plus = value(point.replace(point.values + eps * direction.values))
        minus = value(point.replace(point.values - eps * direction.values))
        fd = (plus - minus) / (2 * eps)
        best = min(best, abs(fd - analytic) / max(abs(analytic), 1e-300))
    return float(best)


# -- shooting for the scalar ground state ----------------------------------

@dataclass(frozen=True)
class ShootingResult:
    """Positive radial solution of ``-u'' - (N-1)/r u' + lam u = beta |u|^(2p-2) u``.

    ``values`` are sampled on the grid nodes; ``parameter`` is ``u(0)`` for
    centred domains and ``u'(r_inner)`` otherwise.
    """

    values: np.ndarray
    parameter: float
    bracket_width: float
    energy: float


def _midpoint_radial(f, r_lo: float, r_hi: float, N: int, m: int = 20000) -> float:
    edges = np.linspace(r_lo, r_hi, m + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return float(np.sum(f(mid) * mid ** (N - 1)) * (r_hi - r_lo) / m)


def shooting_ground_state(domain: DiscreteDomain, lam: float, p: float, beta: float = 1.0,
                          rtol: float = 1e-13, atol: float = 1e-15, r0: float = 1e-6) -> ShootingResult:
    """Bisection shooting for the positive Dirichlet ground state on a radial domain.

    Raises
    ------
    RuntimeError
        If no shooting bracket (one undershoot, one overshoot) is found.
    """
    desc = domain.descriptor
    N = int(desc.N)
    r_in, R = desc.radii
    centred = desc.centred
    e = 2 * p - 2

    def rhs(r, y):
        u, du = y
        f = lam * u - beta * np.abs(u) ** e * u
        return [du, f - (N - 1) / r * du if N > 1 else f]

    def start(alpha):
        if centred:
            f0 = lam * alpha - beta * abs(alpha) ** e * alpha
            return r0, [alpha + f0 * r0**2 / (2 * N), f0 * r0 / N]
        return r_in, [0.0, alpha]

    def crossing(r, y):
        return y[0]
    crossing.terminal, crossing.direction = True, -1

    def turn_up(r, y):
        return y[1]
    turn_up.terminal, turn_up.direction = True, 1

    def overshoots(alpha) -> bool:
        r_start, y0 = start(alpha)
        sol = solve_ivp(rhs, (r_start, R), y0, method="DOP853", rtol=rtol, atol=atol,
                        events=(crossing, turn_up))
        if sol.t_events[0].size:
            return True
        return False

    lo, hi = 1e-3, 1.0
    while overshoots(lo):
        lo *= 0.1
        if lo < 1e-12:
            raise RuntimeError("no undershooting parameter found")
    hi = max(hi, 2 * lo)
    while not overshoots(hi):
        hi *= 2.0
        if hi > 1e8:
            raise RuntimeError("no overshooting parameter found")
    while hi - lo > 4 * np.finfo(float).eps * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if overshoots(mid):
            hi = mid
        else:
            lo = mid

    def profile(alpha):
        r_start, y0 = start(alpha)
        sol = solve_ivp(rhs, (r_start, R), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        rr = np.clip(domain.r, r_start, R)
        return sol.sol(rr)[0], sol

    u_lo, sol_lo = profile(lo)
    u_hi, _ = profile(hi)
    values = 0.5 * (u_lo + u_hi)
    if centred:
        values[domain.r < r0] = sol_lo.sol(r0)[0]
    values[domain.r >= R] = 0.0
    if not centred:
        values[domain.r <= r_in] = 0.0

    def grad_sq(r):
        return sol_lo.sol(np.clip(r, r0 if centred else r_in, R))[1] ** 2

    def field(r):
        return sol_lo.sol(np.clip(r, r0 if centred else r_in, R))[0]

    lo_r = 0.0 if centred else r_in
    quad = _midpoint_radial(lambda r: grad_sq(r) + lam * field(r) ** 2, lo_r, R, N)
    inter = _midpoint_radial(lambda r: beta * np.abs(field(r)) ** (2 * p), lo_r, R, N)
    en = 0.5 * quad - inter / (2 * p)
    return ShootingResult(values, float(0.5 * (lo + hi)), float(hi - lo), float(en))


# -- independent multistart minimisation of the energy on the constraint set --

class _Envelope:
    """``Phi(u) = max_s J(s u)`` with its envelope gradient, on preconditioned variables."""

    def __init__(self, spec, domain: DiscreteDomain):
        self.spec = spec
        self.dom = domain
        self.lo, self.hi = domain.lo, domain.hi
        self.m = self.hi - self.lo
        self.w = np.asarray(domain.weights[self.lo:self.hi])
        face = np.asarray(domain.face)
        self.chol = []
        for lam in spec.lam:
            K = np.zeros((self.m, self.m))
            idx = np.arange(self.m)
            diag = np.zeros(domain.n)
            diag[:-1] += face
            diag[1:] += face
            K[idx, idx] = diag[self.lo:self.hi] + lam * self.w
            off = -face[self.lo:self.hi - 1]
            K[idx[:-1], idx[1:]] = off
            K[idx[1:], idx[:-1]] = off
            self.chol.append(np.linalg.cholesky(K).T)  # K = R^T R
        self.bounds = np.asarray(spec.bounds)

    def fields(self, y):
        y = y.reshape(self.spec.ell, self.m)
        return np.array([np.linalg.solve(self.chol[i], y[i]) for i in range(self.spec.ell)])

    def scales(self, y):
        """Own maximisation of ``J(s u)`` over ``s`` in log coordinates (BFGS)."""
        spec = self.spec
        p = spec.p
        u = self.fields(y)
        sq = np.sum(y.reshape(spec.ell, self.m) ** 2, axis=1)
        A = np.abs(u) ** p
        P = (A * self.w) @ A.T
        labels = np.repeat(np.arange(spec.q), np.diff(self.bounds))
        Bq = np.zeros((spec.q, spec.q))
        np.add.at(Bq, (labels[:, None], labels[None, :]), spec.beta * P)
        nq = np.bincount(labels, sq, minlength=spec.q)

        def neg(x):
            s = np.exp(x)
            sp = s**p
            val = 0.5 * nq @ s**2 - (sp @ Bq @ sp) / (2 * p)
            grad_s = nq * s - s ** (p - 1) * (Bq @ sp)
            return -val, -grad_s * s

        x0 = np.zeros(spec.q)
        # an unbounded direction overflows; caught by the finiteness test below
        with np.errstate(over="ignore", invalid="ignore"):
            res = minimize(neg, x0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
            s = np.exp(res.x)
        if not np.all(np.isfinite(s)) or np.max(s) > 1e6:
            return None, None, None
        return s, -res.fun, (u, labels)

    def __call__(self, y):
        s, val, extra = self.scales(y)
        if s is None:
            return 1e30, np.zeros_like(y)
        spec = self.spec
        u, labels = extra
        p = spec.p
        su = u * s[labels][:, None]
        A = np.abs(su) ** p
        nl = (spec.beta @ A) * np.sign(su) * np.abs(su) ** (p - 1)
        # gradient of Phi in y: s_h * R^{-T} (K (s u) - W nl) expressed through y
        gy = []
        Y = y.reshape(spec.ell, self.m)
        for i in range(spec.ell):
            R = self.chol[i]
            cov = np.linalg.solve(R.T, self.w * nl[i])
            gy.append(s[labels[i]] * (s[labels[i]] * Y[i] - cov))
        return val, np.concatenate(gy)


def multistart_energy(spec, domain: DiscreteDomain, k: int = 8, seed: int = 0,
                      max_iter: int = 3000) -> np.ndarray:
    """Sorted final energies of ``k`` independent L-BFGS minimisations of ``max_s J(s u)``.

    Starts are random positive bump fields. Runs that fail to produce a
    finite energy are dropped.
    """
    if k < 8:
        raise ValueError("need at least 8 starts")
    env = _Envelope(spec, domain)
    rng = np.random.default_rng(seed)
    r = domain.r[env.lo:env.hi]
    R = domain.r[-1]
    r_in = domain.descriptor.radii[0]
    out = []
    for _ in range(k):
        u0 = []
        for i in range(spec.ell):
            c = rng.uniform(r_in, R)
            width = rng.uniform(0.15, 0.6) * (R - r_in)
            u0.append(np.exp(-((r - c) / width) ** 2) * rng.uniform(0.5, 1.5) + 1e-3)
        y0 = np.concatenate([env.chol[i] @ u0[i] for i in range(spec.ell)])
        res = minimize(env, y0, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 30})
        if np.isfinite(res.fun) and res.fun < 1e29:
            out.append(float(res.fun))
    return np.sort(np.array(out))
