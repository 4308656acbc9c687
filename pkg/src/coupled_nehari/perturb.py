"""Switching on a dead component of a semitrivial constraint point.

Given ``u`` on the constraint set with component ``i0`` (in block ``h0``)
equal to zero, a direction ``phi`` and ``eps > 0``, the perturbed function
``u_eps`` replaces ``u_i0`` by ``eps * phi``. Block scalings ``t(eps)`` with
``t(0) = 1`` put ``t(eps) u_eps`` back on the constraint set, and the energy
change ``Delta(eps)`` has the leading behaviour

    p < 2:  Delta ~ -eps^p / p * sum_{j != i0} beta_{i0 j} int |phi|^p |u_j|^p
    p = 2:  Delta ~  eps^2 / 2 * (||phi||_{i0}^2 - sum_{j != i0} beta_{i0 j} int phi^2 u_j^2).

For ``p = 2`` :func:`escape_coefficient` returns the bracket without the
factor 1/2, so the measured limit is half of it. Only the sign decides
whether the dead component can be switched on.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .discretize import BlockFunction, energy, interaction_matrix, mixed_integral, norm_sq
from .nehari import block_interactions

DEFAULT_EPSILONS = tuple(np.geomspace(1e-1, 1e-4, 13))


class ContinuationError(RuntimeError):
    """Newton on ``t -> F(eps, t)`` failed: ``eps`` is beyond the continuation radius."""


@dataclass(frozen=True)
class EscapeProbe:
    """Dead component (0-based), direction ``phi`` and the ``eps`` schedule."""

    dead_component: int
    direction: np.ndarray
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS

    def __post_init__(self):
        phi = np.array(self.direction, dtype=float)
        if not np.any(phi):
            raise ValueError("direction must be nonzero")
        phi.setflags(write=False)
        object.__setattr__(self, "direction", phi)
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or min(eps) <= 0 or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be positive and strictly decreasing")
        object.__setattr__(self, "epsilons", eps)


def default_direction(u: BlockFunction, spec, dead: int) -> np.ndarray:
    """The live component of the dead one's block with the largest ``L^{2p}`` norm."""
    h = spec.partition.block_of(dead)
    idx = [i for i in spec.partition.block(h) if i != dead]
    if not idx:
        raise ValueError("the dead component is alone in its block")
    norms = [mixed_integral(u.values[i], u.values[i], spec.p, u.domain) for i in idx]
    return np.array(u.values[idx[int(np.argmax(norms))]])


def perturbed(u: BlockFunction, phi: np.ndarray, eps: float, dead: int) -> BlockFunction:
    vals = np.array(u.values)
    vals[dead] = eps * np.asarray(phi, dtype=float)
    return u.replace(vals)


def _compact_parts(eps, u, phi, spec, dead):
    v = perturbed(u, phi, eps, dead)
    A = v.block_norms_sq(spec.lam)
    B = block_interactions(v.values, spec.beta, spec.p, u.domain, u.bounds)
    return A, B


def _compact(A, B, t, p):
    tp = t**p
    return A * t**2 - tp * (B @ tp)


def f_system(eps: float, t, u: BlockFunction, phi: np.ndarray, spec, dead: int = 0,
             method: str = "terms") -> np.ndarray:
    """``F_h(eps, t) = d_{u_h} J(t u_eps)[t_h u_eps,h]`` for every block.

    ``method="terms"`` expands every contribution of ``phi`` and of the live
    components separately; ``method="compact"`` evaluates the same quantity
    from the block norms and block interaction sums of ``u_eps``.
    """
    t = np.asarray(t, dtype=float)
    p = spec.p
    if method == "compact":
        A, B = _compact_parts(eps, u, phi, spec, dead)
        return _compact(A, B, t, p)
    if method != "terms":
        raise ValueError(f"unknown method {method!r}")
    d = u.domain
    beta, lam = spec.beta, spec.lam
    h0 = spec.partition.block_of(dead)
    blocks = [list(spec.partition.block(h)) for h in range(spec.q)]
    hat = [[i for i in blk if i != dead] for blk in blocks]
    vals = np.array(u.values)
    vals[dead] = 0.0
    P = interaction_matrix(vals, p, d)
    P = 0.5 * (P + P.T)
    phi = np.asarray(phi, dtype=float)
    phi_nrm = norm_sq(phi, d, lam[dead])
    phi_self = mixed_integral(phi, phi, p, d)
    phi_mix = np.array([mixed_integral(phi, vals[j], p, d) for j in range(spec.ell)])
    nrm = np.array([norm_sq(vals[i], d, lam[i]) for i in range(spec.ell)])
    e = abs(eps)

    def pair_sum(I, K):
        return sum(beta[i, j] * P[i, j] for i in I for j in K)

    F = np.zeros(spec.q)
    for h in range(spec.q):
        th = t[h]
        others = [k for k in range(spec.q) if k not in (h, h0)]
        if h == h0:
            val = th**2 * eps**2 * phi_nrm + th**2 * nrm[hat[h]].sum()
            val -= th ** (2 * p) * e ** (2 * p) * beta[dead, dead] * phi_self
            val -= 2 * th ** (2 * p) * e**p * sum(beta[dead, j] * phi_mix[j] for j in hat[h])
            val -= th ** (2 * p) * pair_sum(hat[h], hat[h])
            val -= th**p * e**p * sum(t[k] ** p * sum(beta[dead, j] * phi_mix[j] for j in blocks[k])
                                      for k in range(spec.q) if k != h0)
            val -= th**p * sum(t[k] ** p * pair_sum(hat[h], blocks[k]) for k in range(spec.q) if k != h0)
        else:
            val = th**2 * nrm[blocks[h]].sum() - th ** (2 * p) * pair_sum(blocks[h], blocks[h])
            val -= th**p * t[h0] ** p * e**p * sum(beta[i, dead] * phi_mix[i] for i in blocks[h])
            val -= th**p * t[h0] ** p * pair_sum(blocks[h], hat[h0])
            val -= th**p * sum(t[k] ** p * pair_sum(blocks[h], blocks[k]) for k in others)
        F[h] = val
    return F


def _compact_jacobian(A, B, t, p):
    tp = t**p
    J = -p * B * np.outer(tp, t ** (p - 1))
    diag = 2 * A * t - p * t ** (p - 1) * (B @ tp) - p * np.diag(B) * t ** (2 * p - 1)
    J[np.diag_indices_from(J)] = diag
    return J


def jacobian_t(u: BlockFunction, spec, dead: int = 0) -> np.ndarray:
    """``a_hk = dF_h/dt_k`` at ``eps = 0``, ``t = 1``.

    ``a_hh = 2 ||u_h||^2 - 2p B_hh - p sum_{k != h} B_hk`` and
    ``a_hk = -p B_hk`` with ``B`` the block interaction sums of ``u``.
    """
    vals = np.array(u.values)
    vals[dead] = 0.0
    v = u.replace(vals)
    A = v.block_norms_sq(spec.lam)
    B = block_interactions(vals, spec.beta, spec.p, u.domain, u.bounds)
    p = spec.p
    a = -p * B
    off = B.sum(axis=1) - np.diag(B)
    a[np.diag_indices_from(a)] = 2 * A - 2 * p * np.diag(B) - p * off
    return a


def dominance_report(u: BlockFunction, spec, dead: int = 0, rtol: float = 1e-8) -> dict:
    """Signs of ``a_hk`` and the identity ``|a_hh| - sum_{k != h} |a_hk| = (2p-2) ||u_h||^2``."""
    a = jacobian_t(u, spec, dead)
    vals = np.array(u.values)
    vals[dead] = 0.0
    norms = u.replace(vals).block_norms_sq(spec.lam)
    q = a.shape[0]
    off = ~np.eye(q, dtype=bool)
    gap = np.abs(np.diag(a)) - np.sum(np.abs(a) * off, axis=1)
    target = (2 * spec.p - 2) * norms
    rel = np.abs(gap - target) / target
    return {"a": a.tolist(), "gap": gap.tolist(), "target": target.tolist(), "relative_error": rel.tolist(),
            "diagonal_negative": bool(np.all(np.diag(a) < 0)),
            "off_diagonal_nonnegative": bool(np.all(a[off] >= 0)),
            "identity_ok": bool(np.all(rel <= rtol))}


def continue_t(eps: float, u: BlockFunction, phi: np.ndarray, spec, dead: int = 0, t0=None,
               tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Block scalings ``t(eps)`` with ``t(eps) u_eps`` on the constraint set, by Newton from ``t0`` (default 1).

    Raises
    ------
    ContinuationError
        If Newton does not reach ``|F_h| <= tol * ||u_eps,h||^2``.
    """
    A, B = _compact_parts(eps, u, phi, spec, dead)
    p = spec.p
    t = np.ones(spec.q) if t0 is None else np.array(t0, dtype=float)
    if eps == 0 and t0 is None:
        return t
    for _ in range(max_iter):
        F = _compact(A, B, t, p)
        if np.all(np.abs(F) <= tol * A):
            return t
        step = np.linalg.solve(_compact_jacobian(A, B, t, p), F)
        lam = 1.0
        while np.any(t - lam * step <= 0):
            lam *= 0.5
        t = t - lam * step
    F = _compact(A, B, t, p)
    if np.all(np.abs(F) <= tol * A):
        return t
    raise ContinuationError(f"no continuation at eps={eps:g} (|F|={np.max(np.abs(F)):.3e})")


def escape_coefficient(u: BlockFunction, phi: np.ndarray, spec, dead: int = 0) -> float:
    """Predicted leading coefficient of ``Delta(eps) / eps^min(p, 2)``.

    For ``p = 2`` this is ``||phi||^2 - sum_j beta_{i0 j} int phi^2 u_j^2``
    as usually stated; the exact limit carries an extra factor 1/2
    (see the module notes).
    """
    p = spec.p
    d = u.domain
    others = [j for j in range(spec.ell) if j != dead]
    if p < 2:
        return -sum(spec.beta[dead, j] * mixed_integral(phi, u.values[j], p, d) for j in others) / p
    if p == 2:
        return norm_sq(phi, d, spec.lam[dead]) - sum(spec.beta[dead, j] * mixed_integral(phi, u.values[j], 2.0, d)
                                                     for j in others)
    raise ValueError("no escape expansion is available for p > 2")


def _fit_exponents(p: float) -> list[float]:
    if p == 2:
        return [0.0, 2.0, 4.0]
    exps = sorted({round(a * (2 - p) + b * p, 12) for a in range(3) for b in range(3) if a + b <= 2})
    return exps[:4]


@dataclass
class EscapeReport:
    dead_component: int
    epsilons: list[float]
    t: list[list[float]]
    delta: list[float]
    ratio: list[float]
    predicted: float
    fitted: float
    gap: float
    passed: bool
    truncated: bool
    contact_order: float | None
    exponents: list[float]
    warnings: list[str] = field(default_factory=list)

    @property
    def measured_over_predicted(self) -> float:
        return self.fitted / self.predicted if self.predicted else float("nan")

    def to_dict(self) -> dict:
        return {**asdict(self), "measured_over_predicted": self.measured_over_predicted}


def escape_test(probe: EscapeProbe, u: BlockFunction, spec, tolerance: float = 0.05) -> EscapeReport:
    """Measure ``Delta(eps)`` along the schedule and compare its extrapolated limit with the prediction.

    ``Delta(eps) / eps^min(p, 2)`` is fitted by least squares in powers of
    ``eps`` matching the expansion (``eps^(a(2-p) + b p)`` for ``p < 2``,
    even powers for ``p = 2``); the constant term is the fitted limit.
    Points where ``|Delta|`` falls below ``1e-12 |J(u)|`` are dropped.
    """
    p = spec.p
    dead = probe.dead_component
    phi = probe.direction
    base = energy(u, spec)
    power = min(p, 2.0)
    pred = escape_coefficient(u, phi, spec, dead)
    eps_used, ts, deltas, warnings = [], [], [], []
    t = None
    truncated = False
    for eps in probe.epsilons:
        try:
            t = continue_t(eps, u, phi, spec, dead, t0=t)
        except ContinuationError as exc:
            warnings.append(str(exc))
            t = None
            continue
        delta = energy(perturbed(u, phi, eps, dead).scaled(t), spec) - base
        if abs(delta) < 1e-12 * abs(base):
            truncated = True
            warnings.append(f"eps={eps:.3g}: Delta below the cancellation guard; schedule truncated")
            break
        eps_used.append(eps)
        ts.append(t.tolist())
        deltas.append(delta)
    eps_arr = np.array(eps_used)
    ratio = np.array(deltas) / eps_arr**power if eps_used else np.array([])
    exps = _fit_exponents(p)
    fitted = float("nan")
    if len(eps_used) > len(exps):
        X = eps_arr[:, None] ** np.array(exps)[None, :]
        coef, *_ = np.linalg.lstsq(X, ratio, rcond=None)
        fitted = float(coef[0])
    elif eps_used:
        fitted = float(ratio[-1])
        warnings.append("too few points for extrapolation; using the smallest eps")
    scale = abs(pred)
    if scale == 0:
        d = u.domain
        scale = norm_sq(phi, d, spec.lam[dead]) + sum(
            abs(spec.beta[dead, j]) * mixed_integral(phi, u.values[j], p, d) for j in range(spec.ell) if j != dead)
    gap = abs(fitted - pred) / scale if np.isfinite(fitted) else float("inf")
    passed = bool(gap <= tolerance)
    if pred < 0 and deltas and not deltas[-1] < 0:
        passed = False
        warnings.append("predicted energy decrease not observed at the smallest eps")
    order = None
    if len(eps_used) >= 3:
        dev = np.array([np.max(np.abs(np.array(tt) - 1)) for tt in ts])
        ok = dev > 0
        if ok.sum() >= 3:
            order = float(np.polyfit(np.log(eps_arr[ok]), np.log(dev[ok]), 1)[0])
    return EscapeReport(dead, eps_used, ts, [float(x) for x in deltas], ratio.tolist(), float(pred), fitted,
                        float(gap), passed, truncated, order, exps, warnings)


def escape_csv(report: EscapeReport, header_comments=()) -> str:
    """``eps, t_1..t_q, Delta, Delta/eps^p`` rows with 17 significant digits."""
    import csv
    import io

    buf = io.StringIO()
    for line in header_comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    q = len(report.t[0]) if report.t else 0
    w.writerow(["eps"] + [f"t_{h + 1}" for h in range(q)] + ["delta", "delta_over_eps_p"])
    for eps, t, dlt, r in zip(report.epsilons, report.t, report.delta, report.ratio):
        w.writerow([f"{eps:.17g}"] + [f"{x:.17g}" for x in t] + [f"{dlt:.17g}", f"{r:.17g}"])
    return buf.getvalue()
