"""Block-wise scaling onto the constraint set and the reduced functional.

For a block function ``u`` with nonzero blocks the energy along block
scalings is the polynomial-like map

    J_u(s) = sum_h a_h s_h**2 - sum_h b_h s_h**(2p) + sum_{h != k} d_hk s_h**p s_k**p,

and ``s_u`` is its unique interior critical point (the global maximiser)
when one exists. ``s_u u`` then satisfies every block constraint
``d_{u_h} J(u)[u_h] = 0``. The reduced functional ``Psi(u) = J(s_u u)`` is
minimised over the product of unit block spheres.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .discretize import BlockFunction, DiscreteDomain, energy, energy_gradient, interaction_matrix

DEFAULT_CAP = 1e8


class OutsideDomainError(ValueError):
    """The scaling maximiser escapes to infinity: ``u`` lies outside the domain of ``Psi``."""


class ScaleSolveError(RuntimeError):
    """The scale solver neither converged nor certified an escape."""


class ZeroBlockError(ValueError):
    """A block of the input vanishes, so no block scaling can place it on the constraint set."""


@dataclass(frozen=True)
class NehariCoefficients:
    """Coefficients ``a``, ``b``, ``d`` of the block-scaling energy ``J_u``."""

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    p: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        b = np.array(self.b, dtype=float).ravel()
        d = np.array(self.d, dtype=float).reshape(a.size, a.size)
        if b.size != a.size:
            raise ValueError("a and b must have the same length")
        if not np.all(a > 0):
            raise ZeroBlockError("every block needs a positive norm (a_h > 0)")
        if np.any(np.diag(d) != 0):
            raise ValueError("d must have zero diagonal")
        if not np.allclose(d, d.T, rtol=1e-12, atol=0):
            raise ValueError("d must be symmetric")
        d = 0.5 * (d + d.T)
        for arr in (a, b, d):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "p", float(self.p))

    @property
    def q(self) -> int:
        return self.a.size

    @property
    def sign_pattern_ok(self) -> bool:
        """``b > 0`` and ``d >= 0``, which the coupling sign rule guarantees."""
        return bool(np.all(self.b > 0) and np.all(self.d >= 0))

    def value(self, s) -> float:
        s = np.asarray(s, dtype=float)
        sp = s**self.p
        return float(self.a @ s**2 - self.b @ sp**2 + sp @ self.d @ sp)

    def gradient(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        p = self.p
        sp = s**p
        return 2 * self.a * s - 2 * p * self.b * s ** (2 * p - 1) + 2 * p * s ** (p - 1) * (self.d @ sp)

    def hessian(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        p = self.p
        sp = s**p
        spm = s ** (p - 1)
        H = 2 * p * p * self.d * np.outer(spm, spm)
        diag = 2 * self.a - 2 * p * (2 * p - 1) * self.b * s ** (2 * p - 2) \
            + 2 * p * (p - 1) * s ** (p - 2) * (self.d @ sp)
        H[np.diag_indices_from(H)] = diag
        return H

    def decoupled_scales(self) -> np.ndarray:
        """Maximisers of each block's ``a s**2 - b s**(2p)`` with ``d`` ignored."""
        return (self.a / (self.p * self.b)) ** (1.0 / (2 * self.p - 2))

    def constraint_residual(self, s) -> np.ndarray:
        """Relative block constraint ``s_h dJ/ds_h / (2 a_h s_h**2)``; zero exactly on the constraint set."""
        s = np.asarray(s, dtype=float)
        return s * self.gradient(s) / (2 * self.a * s**2)

    def to_dict(self) -> dict:
        return {"p": self.p, "a": self.a.tolist(), "b": self.b.tolist(), "d": self.d.tolist()}


@dataclass(frozen=True)
class NehariScales:
    s: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float).ravel()
        if not (np.all(np.isfinite(s)) and np.all(s > 0)):
            raise ValueError("scales must be finite and positive")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)


def block_interactions(values: np.ndarray, beta: np.ndarray, p: float, domain: DiscreteDomain,
                       bounds) -> np.ndarray:
    """``B[h, k] = sum_{i in I_h, j in I_k} beta_ij int |u_i|^p |u_j|^p``."""
    P = interaction_matrix(values, p, domain)
    P = 0.5 * (P + P.T)
    full = beta * P
    b = np.asarray(bounds)
    return np.add.reduceat(np.add.reduceat(full, b[:-1], axis=0), b[:-1], axis=1)


def coefficients(u: BlockFunction, spec) -> NehariCoefficients:
    """Coefficients of ``s -> J(s u)`` for the block function ``u``.

    Raises
    ------
    ZeroBlockError
        If some block of ``u`` is identically zero.
    """
    norms = u.block_norms_sq(spec.lam)
    if np.any(norms <= 0):
        raise ZeroBlockError("u has a vanishing block")
    B = block_interactions(u.values, spec.beta, spec.p, u.domain, u.bounds)
    d = -B / (2 * spec.p)
    np.fill_diagonal(d, 0.0)
    return NehariCoefficients(0.5 * norms, np.diag(B) / (2 * spec.p), d, spec.p)


# -- the scale solver --------------------------------------------------------

def _converged(c: NehariCoefficients, s: np.ndarray, tol: float) -> bool:
    return bool(np.max(np.abs(c.constraint_residual(s))) <= tol)


def _escaping(c: NehariCoefficients, s: np.ndarray, cap: float) -> bool:
    return bool(np.linalg.norm(s) > cap and s @ c.gradient(s) > 0)


def _newton(c: NehariCoefficients, s0: np.ndarray, tol: float, cap: float, max_iter: int):
    """Damped Newton ascent in ``x = log s``. Returns (status, s)."""
    x = np.log(s0)
    s = s0
    J = c.value(s)
    for _ in range(max_iter):
        if _converged(c, s, tol):
            return "ok", s
        if _escaping(c, s, cap):
            return "escape", s
        g = c.gradient(s)
        G = s * g
        Hx = c.hessian(s) * np.outer(s, s) + np.diag(G)
        # modified Newton: flip positive curvature so the step is always an ascent direction
        w, V = np.linalg.eigh(0.5 * (Hx + Hx.T))
        mag = np.maximum(np.abs(w), 1e-12 * (np.abs(w).max() + 1e-300))
        step = V @ ((V.T @ G) / mag)
        if not np.all(np.isfinite(step)):
            step = G / (np.abs(np.diag(Hx)).max() + 1e-300)
        step *= min(1.0, 2.0 / (np.abs(step).max() + 1e-300))
        if abs(G @ step) <= 64 * np.finfo(float).eps * max(1.0, abs(J)):
            # predicted ascent is below the round-off of J: take the plain Newton step
            x = x + step
            s = np.exp(x)
            J = c.value(s)
            continue
        for _ in range(60):
            s_new = np.exp(x + step)
            J_new = c.value(s_new)
            if J_new >= J:
                break
            step *= 0.5
        else:
            # no ascent possible at this resolution: accept if already at the top
            return ("ok", s) if _converged(c, s, 1e3 * tol) else ("stalled", s)
        x = x + step
        s, J = s_new, J_new
    return ("ok", s) if _converged(c, s, tol) else ("stalled", s)


def _coordinate_root(c: NehariCoefficients, h: int, s: np.ndarray) -> float:
    """Maximiser of ``J_u`` along coordinate ``h``: root of ``a s^(2-p) + p D - p b s^p``."""
    p = c.p
    D = float(c.d[h] @ s**p)
    a, b = c.a[h], c.b[h]

    def f(y):  # y = log s, scaled so the root is unique and f is decreasing
        t = np.exp(y)
        return a * t ** (2 - 2 * p) + p * D * t ** (-p) - p * b

    lo, hi = np.log(s[h]) - 1.0, np.log(s[h]) + 1.0
    while f(lo) < 0:
        lo -= 2.0
    while f(hi) > 0:
        hi += 2.0
        if hi > 60:
            return np.inf
    return float(np.exp(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)))


def _coordinate_ascent(c: NehariCoefficients, s0: np.ndarray, tol: float, cap: float, max_sweeps: int = 20000):
    s = s0.copy()
    for _ in range(max_sweeps):
        prev = s.copy()
        for h in range(c.q):
            root = _coordinate_root(c, h, s)
            if not np.isfinite(root):
                # the coordinate maximiser lies beyond exp(60), far past any cap
                s[h] = np.exp(60.0)
                return ("escape", s) if _escaping(c, s, cap) else ("stalled", s)
            s[h] = root
            if np.linalg.norm(s) > cap:
                return ("escape", s) if _escaping(c, s, cap) else ("stalled", s)
        if np.max(np.abs(s / prev - 1)) < 1e-13:
            break
    return ("ok", s) if _converged(c, s, 1e3 * tol) else ("stalled", s)


def _grid_start(c: NehariCoefficients, points: int = 41) -> np.ndarray:
    base = c.decoupled_scales()
    axis = np.logspace(-2, 2, points)
    best, best_val = base, c.value(base)
    rng = np.random.default_rng(12345)
    for _ in range(200 * c.q):
        cand = base * rng.choice(axis, size=c.q)
        val = c.value(cand)
        if val > best_val:
            best, best_val = cand, val
    return best


def _is_global_max(c: NehariCoefficients, s: np.ndarray, samples: int) -> bool:
    rng = np.random.default_rng(2024)
    J0 = c.value(s)
    top = 4 * s.max()
    trial = rng.uniform(0, top, size=(samples, c.q))
    vals = np.array([c.value(t) for t in trial])
    return bool(np.all(vals <= J0 + 1e-12 * (1 + abs(J0))))


def solve_scales(coeffs: NehariCoefficients, cap: float = DEFAULT_CAP, tol: float = 1e-13,
                 max_iter: int = 200, verify_samples: int = 64, start=None) -> NehariScales | None:
    """Unique interior critical point of ``J_u``, or ``None`` when the maximiser escapes.

    Parameters
    ----------
    coeffs : NehariCoefficients
        Must have ``b > 0`` and ``d >= 0``.
    cap : float
        Escape is declared when ``|s| > cap`` while ``J_u`` still increases
        along the ray through ``s``.
    tol : float
        Bound on the relative block constraint residual.
    verify_samples : int
        Number of random points in ``(0, 4 max s]^q`` used to confirm the
        result is the global maximum (0 disables the check).
    start : array_like, optional
        Initial scales for Newton; by default the decoupled closed forms
        (or the exact solution of the linear system when ``p = 2``).

    Raises
    ------
    ScaleSolveError
        If no method converges and no escape is certified.
    """
    c = coeffs
    if not c.sign_pattern_ok:
        raise ValueError("coefficient signs violate b > 0, d >= 0")
    p = c.p
    if p == 2.0:
        # stationarity is linear in z = s**2: (2 diag(b) - 2 d) z = a
        M = 2 * (np.diag(c.b) - c.d)
        try:
            z = np.linalg.solve(M, c.a)
        except np.linalg.LinAlgError:
            z = None
        if z is None or not np.all(z > 0) or not np.all(np.isfinite(z)):
            return None
        s0 = np.sqrt(z)
    else:
        s0 = c.decoupled_scales()
    if start is not None:
        s0 = np.asarray(start, dtype=float)
        if s0.shape != c.a.shape or not np.all(s0 > 0):
            raise ValueError("start must be a positive vector with one entry per block")
    status, s = _newton(c, s0, tol, cap, max_iter)
    if status == "stalled":
        status, s = _coordinate_ascent(c, s, tol, cap)
        if status == "ok":
            status, s = _newton(c, s, tol, cap, max_iter)
    if status == "stalled":
        status, s = _newton(c, _grid_start(c), tol, cap, max_iter)
    if status == "escape":
        return None
    if status != "ok":
        raise ScaleSolveError(f"scale solver stalled at s={s.tolist()}")
    if verify_samples and not _is_global_max(c, s, verify_samples):
        raise ScaleSolveError("critical point found is not the global maximum of J_u")
    return NehariScales(s)


# -- projection, Psi and its gradient -------------------------------------

def to_unit_blocks(u: BlockFunction, spec) -> BlockFunction:
    """Rescale every block to unit norm (a point of the product of block spheres)."""
    norms = u.block_norms_sq(spec.lam)
    if np.any(norms <= 0):
        raise ZeroBlockError("u has a vanishing block")
    return u.scaled(1.0 / np.sqrt(norms))


def nehari_residuals(u: BlockFunction, spec) -> np.ndarray:
    """Relative block constraints ``(||u_h||**2 - sum_{i in I_h} sum_j beta_ij int ...) / ||u_h||**2``."""
    norms = u.block_norms_sq(spec.lam)
    B = block_interactions(u.values, spec.beta, spec.p, u.domain, u.bounds)
    return (norms - B.sum(axis=1)) / norms


def project_to_nehari(u: BlockFunction, spec, cap: float = DEFAULT_CAP, verify_samples: int = 64,
                      tol: float = 1e-9) -> BlockFunction | None:
    """Place ``u`` on the constraint set by block scaling; ``None`` if ``u`` is outside the domain."""
    unit = to_unit_blocks(u, spec)
    scales = solve_scales(coefficients(unit, spec), cap=cap, verify_samples=verify_samples)
    if scales is None:
        return None
    out = unit.scaled(scales.s)
    res = nehari_residuals(out, spec)
    if np.max(np.abs(res)) > tol:
        raise ScaleSolveError(f"projected point misses the constraint set (residual {np.max(np.abs(res)):.3g})")
    return out


@dataclass(frozen=True)
class PsiEvaluation:
    value: float
    scales: np.ndarray
    unit: BlockFunction
    point: BlockFunction


def evaluate_psi(u: BlockFunction, spec, cap: float = DEFAULT_CAP, verify_samples: int = 0,
                 crosscheck: float = 1e-10) -> PsiEvaluation:
    """``Psi`` at the unit-block representative of ``u`` with both of its expressions cross-checked.

    Raises
    ------
    OutsideDomainError
        If the scale maximiser escapes.
    """
    unit = to_unit_blocks(u, spec)
    scales = solve_scales(coefficients(unit, spec), cap=cap, verify_samples=verify_samples)
    if scales is None:
        raise OutsideDomainError("block scales escape to infinity")
    s = scales.s
    point = unit.scaled(s)
    via_norm = spec.nehari_factor * float(s @ s)
    via_energy = energy(point, spec)
    if abs(via_norm - via_energy) > crosscheck * max(abs(via_norm), 1e-300):
        raise ScaleSolveError(f"Psi expressions disagree: {via_norm!r} vs {via_energy!r}")
    return PsiEvaluation(via_norm, s, unit, point)


def psi(u: BlockFunction, spec, cap: float = DEFAULT_CAP) -> float:
    """Reduced functional ``Psi(u) = J(s_u u) = (1/2 - 1/(2p)) |s_u|**2``.

    The input is first normalised block-wise, so ``psi`` is invariant
    under positive block scalings of ``u``.
    """
    return evaluate_psi(u, spec, cap).value


def block_inner(u: BlockFunction, v: BlockFunction, lam) -> np.ndarray:
    """Per-block inner products ``sum_{i in I_h} <u_i, v_i>_i``."""
    comp = np.array([u.domain.inner(u.values[i], v.values[i], lam[i]) for i in range(u.ell)])
    return np.add.reduceat(comp, np.asarray(u.bounds[:-1]))


def pairing(u: BlockFunction, v: BlockFunction, lam) -> float:
    """Total inner product ``sum_i <u_i, v_i>_i``."""
    return float(block_inner(u, v, lam).sum())


def psi_gradient_at(ev: PsiEvaluation, spec) -> BlockFunction:
    unit, s = ev.unit, ev.scales
    d = unit.domain
    weak = energy_gradient(ev.point, spec, weak=True).values
    factors = np.repeat(s, np.diff(unit.bounds))
    g = np.array([d.riesz(factors[i] * weak[i], spec.lam[i]) for i in range(unit.ell)])
    g = unit.replace(g)
    coef = block_inner(g, unit, spec.lam)
    return g.replace(g.values - np.repeat(coef, np.diff(unit.bounds))[:, None] * unit.values)


def psi_gradient(u: BlockFunction, spec, cap: float = DEFAULT_CAP) -> BlockFunction:
    """Tangent gradient of ``Psi`` at the unit-block representative of ``u``.

    The weak gradient of the energy at ``s_u u`` is scaled by ``s_h`` on
    block ``h``, mapped to its Riesz representative in the
    ``<.,.>_i`` inner products and made tangent by removing the component
    along ``u_h`` in every block.
    """
    return psi_gradient_at(evaluate_psi(u, spec, cap), spec)


def d0_floor(spec, S: float) -> float:
    """Lower bound ``d0`` for ``min_h ||u_h||**2`` on the constraint set.

    From ``||u_h||**2 <= beta_max,h m_h S**(-p) ||u_h||**(2p)`` with
    ``m_h = |I_h|**(2-p)`` for ``p <= 2`` and 1 otherwise.
    """
    p = spec.p
    out = np.inf
    for h in range(spec.q):
        idx = list(spec.partition.block(h))
        bmax = spec.beta[np.ix_(idx, idx)].max()
        m = len(idx) ** (2 - p) if p <= 2 else 1.0
        C = bmax * m * S ** (-p)
        out = min(out, C ** (-1.0 / (p - 1)))
    return float(out)
