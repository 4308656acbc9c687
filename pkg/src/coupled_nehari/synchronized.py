"""The algebraic amplitude system for solutions of the form ``(c_1 u, ..., c_ell u)``.

If ``u`` solves the scalar equation ``-Delta u + lam u = |u|^(2p-2) u`` and
``c`` solves

    c_i = sum_j beta_ij |c_j|^p |c_i|^(p-2) c_i,      i = 1..ell,

then ``(c_1 u, ..., c_ell u)`` solves the system. Nontrivial solutions of
the amplitude system are critical points of

    J(c) = 1/2 |c|^2 - 1/(2p) sum_ij beta_ij |c_i|^p |c_j|^p

on ``M = {c != 0 : <grad J(c), c> = 0}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, root

from .discretize import BlockFunction, DiscreteDomain


@dataclass(frozen=True)
class SyncCandidate:
    """Amplitude vector ``c`` with diagnostics.

    ``is_minimizer`` tells whether ``c`` minimises ``J`` on ``M`` (up to the
    multistart search); when it does not, ``minimizer`` holds the best
    minimiser found.
    """

    c: np.ndarray
    energy: float = float("nan")
    residual: float = float("nan")
    is_minimizer: bool = True
    minimizer: np.ndarray | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise ValueError("amplitudes must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def positive(self) -> bool:
        return bool(np.all(self.c > 0))

    @property
    def min_c(self) -> np.ndarray:
        return self.c if self.minimizer is None else self.minimizer

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "energy": self.energy, "residual": self.residual,
                "positive": self.positive, "is_minimizer": self.is_minimizer,
                "minimizer": None if self.minimizer is None else self.minimizer.tolist(),
                "notes": list(self.notes)}


def _beta(beta) -> np.ndarray:
    b = np.asarray(beta, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1] or not np.array_equal(b, b.T):
        raise ValueError("beta must be a symmetric square matrix")
    return b


def interaction(c, beta, p: float) -> float:
    """``sum_ij beta_ij |c_i|^p |c_j|^p``."""
    a = np.abs(np.asarray(c, dtype=float)) ** p
    return float(a @ np.asarray(beta, dtype=float) @ a)


def sync_energy(c, beta, p: float) -> float:
    c = np.asarray(c, dtype=float)
    return 0.5 * float(c @ c) - interaction(c, beta, p) / (2 * p)


def sync_gradient(c, beta, p: float) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    a = np.abs(c) ** p
    return c - (np.asarray(beta) @ a) * np.sign(c) * np.abs(c) ** (p - 1)


def sync_residual(c, beta, p: float) -> float:
    """``max_i |c_i - sum_j beta_ij |c_j|^p |c_i|^(p-2) c_i|`` (the last factor is 0 at ``c_i = 0``)."""
    g = sync_gradient(c, beta, p)
    return float(np.max(np.abs(g))) if g.size else 0.0


def m_constraint(c, beta, p: float) -> float:
    """``<grad J(c), c> = |c|^2 - sum beta |c_i|^p |c_j|^p``."""
    c = np.asarray(c, dtype=float)
    return float(c @ c) - interaction(c, beta, p)


def project_to_M(c, beta, p: float) -> SyncCandidate | None:
    """Radial scaling ``t c`` onto ``M``; ``None`` when the interaction is not positive."""
    beta = _beta(beta)
    c = np.asarray(c, dtype=float)
    Q = interaction(c, beta, p)
    if not np.any(c) or not Q > 0:
        return None
    t = (float(c @ c) / Q) ** (1.0 / (2 * p - 2))
    out = t * c
    return SyncCandidate(out, sync_energy(out, beta, p), sync_residual(out, beta, p))


def m_identity_report(c, beta, p: float) -> dict:
    """Compare ``J(c) / |c|^2`` on ``M`` with the two candidate constants.

    On ``M`` the constraint gives ``sum beta |c_i|^p |c_j|^p = |c|^2`` and so
    ``J(c) = (1/2 - 1/(2p)) |c|^2 = (p-1)/(2p) |c|^2``; the alternative
    ``(p-1)/p`` is reported for comparison.
    """
    c = np.asarray(c, dtype=float)
    ratio = sync_energy(c, beta, p) / float(c @ c)
    half, full = (p - 1) / (2 * p), (p - 1) / p
    return {"ratio": ratio, "(p-1)/(2p)": half, "(p-1)/p": full,
            "supported": "(p-1)/(2p)" if abs(ratio - half) <= abs(ratio - full) else "(p-1)/p",
            "constraint": m_constraint(c, beta, p)}


# -- minimisation on M -------------------------------------------------------

def _sphere_ascent(x: np.ndarray, beta: np.ndarray, p: float) -> np.ndarray:
    """Maximise ``sum beta x_i^p x_j^p / |x|^(2p)`` over ``x > 0``.

    Works in ``z = log x`` (bounded box) so no coordinate is ever pinned at
    an exact zero, where the gradient would vanish for ``p < 2``.
    """

    def neg(z):
        y = np.exp(z)
        n2 = y @ y
        a = y**p
        Ba = beta @ a
        Q = a @ Ba
        val = Q / n2**p
        gy = 2 * p * Ba * y ** (p - 1) / n2**p - 2 * p * Q * y / n2 ** (p + 1)
        return -val, -gy * y

    z0 = np.log(np.maximum(x / np.max(x), 1e-8))
    res = minimize(neg, z0, jac=True, method="L-BFGS-B", bounds=[(-60.0, 0.0)] * x.size,
                   options={"maxiter": 5000, "gtol": 1e-14, "ftol": 1e-16})
    y = np.exp(res.x)
    return y / np.linalg.norm(y)


def _polish(c: np.ndarray, beta: np.ndarray, p: float, cut: float = 0.0) -> tuple[np.ndarray, float]:
    """Newton on ``1 = sum_j beta_ij c_j^p c_i^(p-2)`` over the entries of ``c`` above ``cut * max``.

    Works in ``w = log c`` so that tiny but positive amplitudes are kept.
    Returns the polished vector and the largest equation residual on the
    support (``inf`` on failure).
    """
    support = np.flatnonzero(c > cut * c.max())
    B = beta[np.ix_(support, support)]

    def fun(w):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            x = np.exp(w)
            T = B * np.outer(x ** (p - 2), x**p)
            F = 1 - T.sum(axis=1)
            Jm = -p * T
            Jm[np.diag_indices_from(Jm)] -= (p - 2) * T.sum(axis=1)
        return F, Jm

    sol = root(fun, np.log(c[support]), jac=True, method="hybr", options={"xtol": 1e-15})
    out = np.zeros_like(c)
    F, _ = fun(sol.x)
    if not (np.all(np.isfinite(sol.x)) and sol.x.max() < 700 and np.all(np.isfinite(F))):
        return out, np.inf
    out[support] = np.exp(sol.x)
    return out, float(np.max(np.abs(F)))


def _positive_p2(beta: np.ndarray) -> np.ndarray | None:
    """Positive solution for ``p = 2``: the linear system ``beta x = 1`` in ``x = c**2``."""
    try:
        x = np.linalg.solve(beta, np.ones(beta.shape[0]))
    except np.linalg.LinAlgError:
        return None
    if np.all(x > 0) and np.all(np.isfinite(x)):
        return np.sqrt(x)
    return None


def solve_sync(beta, p: float, restarts: int = 16, seed: int = 0, tol: float = 1e-10) -> SyncCandidate | None:
    """Minimise ``J`` on ``M`` by multistart; prefer a positive solution when one exists.

    The minimiser is found by maximising the interaction on the unit
    sphere of the non-negative orthant (``J`` depends on ``|c_i|`` only), then
    scaling onto ``M`` and polishing by Newton on its support. When the
    minimiser is not positive a positive solution is also sought (exactly
    for ``p = 2``); if one is found it is returned with
    ``is_minimizer=False`` and the minimiser attached.

    Raises
    ------
    RuntimeError
        If ``beta`` is cooperative, ``p < 2`` and the minimiser is not
        positive.
    """
    beta = _beta(beta)
    if not np.all(np.diag(beta) > 0):
        raise ValueError("diagonal couplings must be positive")
    ell = beta.shape[0]
    rng = np.random.default_rng(seed)
    starts = [np.ones(ell)] + [e for e in np.eye(ell)] + [rng.uniform(0.05, 1.0, ell) for _ in range(restarts)]
    found, fallback = [], []
    for x0 in starts:
        x = _sphere_ascent(x0, beta, p)
        cand = project_to_M(x, beta, p)
        if cand is None:
            continue
        # entries that drift to zero are cut at several levels; every converged polish is kept
        for cut in (0.0, 1e-7, 1e-4, 1e-2):
            c, eq_res = _polish(cand.c, beta, p, cut)
            if eq_res <= tol and sync_residual(c, beta, p) <= tol:
                found.append((sync_energy(c, beta, p), c))
        fallback.append((cand.energy, cand.c))
    if not found:
        found = fallback
    if not found:
        return None
    e_low = min(e for e, _ in found)
    # energies tied to round-off: amplitudes far below 1e-8 change J by less than eps, so
    # prefer the larger support (and then the lower energy)
    ties = [(e, c) for e, c in found if e <= e_low + 1e-12 * abs(e_low)]
    e_min, c_min = max(ties, key=lambda t: (np.count_nonzero(t[1] > 0), -t[0]))
    res = sync_residual(c_min, beta, p)
    cooperative = bool(np.all(beta >= 0))
    if cooperative and p < 2 and not np.all(c_min > 0):
        raise RuntimeError(f"cooperative p<2 minimiser has a vanishing amplitude: {c_min.tolist()}")
    if np.all(c_min > 0):
        return SyncCandidate(c_min, e_min, res)
    pos = _positive_p2(beta) if p == 2 else _positive_newton(beta, p, tol)
    if pos is not None and sync_residual(pos, beta, p) <= tol:
        return SyncCandidate(pos, sync_energy(pos, beta, p), sync_residual(pos, beta, p), is_minimizer=False,
                             minimizer=c_min, notes=("positive solution is not the minimiser on M",))
    return SyncCandidate(c_min, e_min, res, notes=("no positive solution found",))


def _positive_newton(beta: np.ndarray, p: float, tol: float) -> np.ndarray | None:
    start = project_to_M(np.ones(beta.shape[0]), beta, p)
    if start is None:
        return None
    c, eq_res = _polish(start.c, beta, p)
    if np.all(c > 0) and eq_res <= tol and sync_residual(c, beta, p) <= tol:
        return c
    return None


@dataclass(frozen=True)
class TwoComponentVerdict:
    verdict: str  # "positive", "none" or "degenerate"
    candidate: SyncCandidate | None
    interval_prediction: str | None

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "interval_prediction": self.interval_prediction,
                "candidate": None if self.candidate is None else self.candidate.to_dict()}


def interval_prediction(b11: float, b22: float, b12: float) -> str | None:
    """Existence of a positive solution predicted by the coupling interval rule.

    Positive iff ``-sqrt(b11 b22) < b12 < min(b11, b22)`` or ``b12 > max(b11, b22)``;
    ``None`` on the interval endpoints.
    """
    edges = (-np.sqrt(b11 * b22), min(b11, b22), max(b11, b22))
    if b12 in edges:
        return None
    inside = edges[0] < b12 < edges[1] or b12 > edges[2]
    return "positive" if inside else "none"


def sync_p2_two_component(beta) -> TwoComponentVerdict:
    """Closed-form positive solution of the ``p = 2`` two-component system.

    Solves ``b11 x + b12 y = 1``, ``b12 x + b22 y = 1`` for ``x = c1**2``,
    ``y = c2**2``; a singular system is reported as degenerate.
    """
    beta = _beta(beta)
    if beta.shape != (2, 2):
        raise ValueError("two-component solver needs a 2x2 matrix")
    b11, b12, b22 = beta[0, 0], beta[0, 1], beta[1, 1]
    if not (b11 > 0 and b22 > 0):
        raise ValueError("diagonal couplings must be positive")
    pred = interval_prediction(b11, b22, b12)
    det = b11 * b22 - b12 * b12
    if abs(det) <= 1e-12 * max(b11 * b22, b12 * b12):
        return TwoComponentVerdict("degenerate", None, pred)
    x = (b22 - b12) / det
    y = (b11 - b12) / det
    if x > 0 and y > 0:
        c = np.sqrt([x, y])
        en = sync_energy(c, beta, 2.0)
        # the other critical points on M are the two semitrivial ones
        semi = [np.array([1 / np.sqrt(b11), 0.0]), np.array([0.0, 1 / np.sqrt(b22)])]
        best = min(semi, key=lambda s: sync_energy(s, beta, 2.0))
        if sync_energy(best, beta, 2.0) < en:
            cand = SyncCandidate(c, en, sync_residual(c, beta, 2.0), False, best,
                                 ("positive solution is not the minimiser on M",))
        else:
            cand = SyncCandidate(c, en, sync_residual(c, beta, 2.0))
        return TwoComponentVerdict("positive", cand, pred)
    return TwoComponentVerdict("none", None, pred)


def lemma_sync_p2_check(c, beta, slack: float = 1e-9) -> dict:
    """Evaluate ``sum_{j != i} beta_ij c_j**2`` and compare with 1 for every ``i``."""
    beta = _beta(beta)
    c = np.asarray(c, dtype=float)
    off = beta - np.diag(np.diag(beta))
    sums = off @ c**2
    return {"sums": sums.tolist(), "bound": 1.0, "slack": slack, "ok": bool(np.all(sums <= 1 + slack))}


def synchronize_with_pde(c, u: np.ndarray, spec, domain: DiscreteDomain):
    """Assemble ``u_i = c_i u`` and evaluate the residual of the full system.

    Returns ``(block_function, system_residual, scalar_residual)`` where the
    residuals are weighted ``L^2`` norms per equation and the scalar one
    refers to ``-Delta u + lam u = |u|^(2p-2) u``.

    Raises
    ------
    ValueError
        If the ``lam_i`` are not all equal.
    """
    from .minimize import euler_lagrange_residual
    from .model import make_spec

    lam = np.asarray(spec.lam, dtype=float)
    if np.ptp(lam) != 0:
        raise ValueError("synchronised solutions need equal lambda_i")
    c = np.asarray(c.c if isinstance(c, SyncCandidate) else c, dtype=float)
    u = np.asarray(u, dtype=float)
    bf = BlockFunction(domain, np.outer(c, u), spec.bounds)
    sys_res = euler_lagrange_residual(bf, spec)
    scalar_spec = make_spec(spec.p, [lam[0]], [[1.0]])
    scalar_res = euler_lagrange_residual(BlockFunction(domain, u[None, :]), scalar_spec)[0]
    return bf, sys_res, float(scalar_res)
