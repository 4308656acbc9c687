"""Problem instances and the structural hypotheses on the coupling.

A problem is the system

    -Delta u_i + lam_i u_i = sum_j beta_ij |u_j|^p |u_i|^(p-2) u_i,   i = 1..ell

with a block partition ``0 = l_0 < l_1 < ... < l_q = ell`` of the components.
Inside a block couplings must be attractive (>= 0), across blocks repulsive
(<= 0), and the diagonal positive.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .discretize import (DiscreteDomain, DomainDescriptor, assemble, default_truncation_radius,
                         norm_sq, smallest_eigenvalue)

DEFAULT_MARGIN = 1e-9


class InstanceError(ValueError):
    """An instance document or object violates the input contract."""


@dataclass(frozen=True)
class BlockPartition:
    ell: int
    bounds: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple(int(b) for b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.ell < 1:
            raise InstanceError("ell must be positive")
        if len(bounds) < 2 or bounds[0] != 0 or bounds[-1] != self.ell:
            raise InstanceError(f"block bounds {list(bounds)} must start at 0 and end at ell={self.ell}")
        if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
            raise InstanceError(f"block bounds {list(bounds)} must be strictly increasing")

    @classmethod
    def single(cls, ell: int) -> "BlockPartition":
        return cls(ell, (0, ell))

    @classmethod
    def singletons(cls, ell: int) -> "BlockPartition":
        return cls(ell, tuple(range(ell + 1)))

    @property
    def q(self) -> int:
        return len(self.bounds) - 1

    def block(self, h: int) -> range:
        """0-based component indices of block ``h`` (0-based)."""
        return range(self.bounds[h], self.bounds[h + 1])

    def block_of(self, i: int) -> int:
        if not 0 <= i < self.ell:
            raise IndexError(i)
        return int(np.searchsorted(self.bounds, i, side="right") - 1)

    def sizes(self) -> np.ndarray:
        return np.diff(self.bounds)

    def same_block_mask(self) -> np.ndarray:
        labels = np.repeat(np.arange(self.q), self.sizes())
        return labels[:, None] == labels[None, :]


@dataclass(frozen=True)
class CouplingMatrix:
    beta: np.ndarray

    def __post_init__(self):
        b = np.array(self.beta, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise InstanceError(f"coupling matrix must be square, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise InstanceError("coupling matrix has non-finite entries")
        bad = np.argwhere(b != b.T)
        if bad.size:
            i, j = (int(x) for x in bad[0])
            raise InstanceError(f"coupling matrix not symmetric: beta{(i + 1, j + 1)}={float(b[i, j])!r} "
                                f"!= beta{(j + 1, i + 1)}={float(b[j, i])!r}")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    @property
    def ell(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class ProblemSpec:
    p: float
    lam: np.ndarray
    partition: BlockPartition
    coupling: CouplingMatrix
    domain: DomainDescriptor | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise InstanceError(f"exponent p must exceed 1, got {self.p}")
        lam = np.array(self.lam, dtype=float).ravel()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "p", float(self.p))
        if not (lam.size == self.partition.ell == self.coupling.ell):
            raise InstanceError(f"inconsistent sizes: lambda has {lam.size}, partition {self.partition.ell}, "
                                f"beta {self.coupling.ell}")
        dom = self.domain
        if dom is not None:
            N, d = dom.N, dom.orbit_dim
            if N > d + 2:
                bound = (N - d) / (N - d - 2)
                if not self.p < bound:
                    raise InstanceError(f"p={self.p} violates the compactness bound p < {bound:g} "
                                        f"(N={N}, orbit dimension {d})")

    @property
    def beta(self) -> np.ndarray:
        return self.coupling.beta

    @property
    def ell(self) -> int:
        return self.partition.ell

    @property
    def q(self) -> int:
        return self.partition.q

    @property
    def bounds(self) -> tuple[int, ...]:
        return self.partition.bounds

    @property
    def nehari_factor(self) -> float:
        """``1/2 - 1/(2p)``: energy per squared norm on the constraint set."""
        return 0.5 - 0.5 / self.p

    def with_domain(self, domain: DomainDescriptor) -> "ProblemSpec":
        return ProblemSpec(self.p, self.lam, self.partition, self.coupling, domain)

    def to_dict(self) -> dict:
        out = {"p": self.p, "lambda": self.lam.tolist(), "beta": self.beta.tolist(),
               "blocks": list(self.bounds)}
        if self.domain is not None:
            out["domain"] = self.domain.to_dict()
        return out


def make_spec(p: float, lam: Sequence[float], beta, blocks: Sequence[int] | None = None,
              domain: DomainDescriptor | None = None) -> ProblemSpec:
    beta = np.asarray(beta, dtype=float)
    ell = beta.shape[0]
    bounds = tuple(blocks) if blocks is not None else (0, ell)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (ell,))
    return ProblemSpec(p, lam, BlockPartition(ell, bounds), CouplingMatrix(beta), domain)


def spec_from_dict(data: dict) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from the instance JSON schema.

    ``{"p": ..., "lambda": [...], "beta": [[...]], "blocks": [0, ..., ell], "domain": {...}}``
    """
    try:
        p = float(data["p"])
        beta = np.asarray(data["beta"], dtype=float)
        lam = np.asarray(data["lambda"], dtype=float)
    except KeyError as exc:
        raise InstanceError(f"instance is missing required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"malformed numeric data: {exc}") from None
    if lam.ndim == 0:
        lam = np.full(beta.shape[0], float(lam))
    blocks = data.get("blocks")
    domain = None
    if data.get("domain") is not None:
        dd = dict(data["domain"])
        if dd.get("kind") == "radial-truncated-space" and dd.get("truncation_radius") is None:
            dd["truncation_radius"] = default_truncation_radius(float(np.min(lam)))
        try:
            domain = DomainDescriptor.from_dict(dd)
        except ValueError as exc:
            raise InstanceError(f"invalid domain: {exc}") from None
    return make_spec(p, lam, beta, blocks, domain)


def load_instance(path) -> ProblemSpec:
    """Read an instance JSON file. Syntax errors are reported with line and column."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(data)


# -- condition reports ------------------------------------------------------

@dataclass
class ConditionReport:
    """Outcome of one structural check.

    ``status`` is one of ``pass``, ``fail``, ``inapplicable``, ``unsupported``,
    ``inconclusive``; ``items`` lists one record per evaluated inequality.
    """

    name: str
    status: str
    items: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def violations(self) -> list[dict]:
        return [it for it in self.items if not it.get("ok", True)]

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "items": self.items, "notes": self.notes}


@dataclass(frozen=True)
class ConditionConstants:
    """Estimated Sobolev constant ``S``, energy bound ``d1`` and threshold ``C_star``.

    ``C_star`` is the raw value ``(p d1 / ((p-1) S^(p/(p-1))))^p``; checks use
    ``C_star * safety_factor``.
    """

    S: float | None
    d1: float | None
    C_star: float | None
    p: float
    safety_factor: float = 2.0
    provenance: dict = field(default_factory=dict)
    heuristic: bool = True

    @classmethod
    def from_values(cls, S: float | None, d1: float | None, p: float, safety_factor: float = 2.0,
                    provenance: dict | None = None, C_star: float | None = None) -> "ConditionConstants":
        prov = dict(provenance or {})
        if C_star is None and S is not None and d1 is not None:
            C_star = c_star(S, d1, p)
            prov.setdefault("C_star", "derived")
        elif C_star is not None:
            prov.setdefault("C_star", "overridden")
        return cls(S, d1, C_star, p, safety_factor, prov)

    @property
    def available(self) -> bool:
        return self.C_star is not None and np.isfinite(self.C_star)

    @property
    def effective_C_star(self) -> float:
        return self.C_star * self.safety_factor

    def to_dict(self) -> dict:
        return {"S": self.S, "d1": self.d1, "C_star": self.C_star, "safety_factor": self.safety_factor,
                "effective_C_star": self.effective_C_star if self.available else None,
                "provenance": self.provenance, "heuristic": self.heuristic}


def c_star(S: float, d1: float, p: float) -> float:
    return (p * d1 / ((p - 1) * S ** (p / (p - 1)))) ** p


def _strict_gt(lhs: float, rhs: float, margin: float) -> bool:
    return lhs - rhs > margin * max(abs(lhs), abs(rhs))


# -- (B1) -------------------------------------------------------------------

def validate_b1(coupling, partition: BlockPartition) -> ConditionReport:
    """Sign pattern of the coupling matrix against the block partition.

    Accepts a :class:`CouplingMatrix` or a raw square array (in which case
    symmetry is checked too). Indices in the report are 1-based.
    """
    beta = np.asarray(coupling.beta if isinstance(coupling, CouplingMatrix) else coupling, dtype=float)
    if beta.ndim != 2 or beta.shape != (partition.ell, partition.ell):
        raise InstanceError(f"coupling of shape {beta.shape} does not match ell={partition.ell}")
    same = partition.same_block_mask()
    items = []
    for i in range(partition.ell):
        for j in range(partition.ell):
            b = beta[i, j]
            if j > i and b != beta[j, i]:
                items.append({"rule": "symmetry", "entry": [i + 1, j + 1], "value": float(b), "ok": False})
            if i == j:
                if not b > 0:
                    items.append({"rule": "diagonal positive", "entry": [i + 1, j + 1], "value": float(b),
                                  "ok": False})
            elif same[i, j] and b < 0:
                items.append({"rule": "intra-block non-negative", "entry": [i + 1, j + 1],
                              "value": float(b), "ok": False})
            elif not same[i, j] and b > 0:
                items.append({"rule": "inter-block non-positive", "entry": [i + 1, j + 1],
                              "value": float(b), "ok": False})
    return ConditionReport("B1", "fail" if items else "pass", items)


# -- (B2) -------------------------------------------------------------------

def _cross_block_abs_sum(beta, partition, h) -> float:
    rows = partition.block(h)
    mask = ~partition.same_block_mask()
    return float(np.sum(np.abs(beta[list(rows)][:, mask[rows[0]]])))


def check_b2(spec: ProblemSpec, constants: ConditionConstants, margin: float = DEFAULT_MARGIN) -> ConditionReport:
    """Evaluate the sufficient condition for fully nontrivial least-energy solutions.

    Singleton blocks are reported as vacuously satisfied. For ``p = 2`` the
    block-constant structure of ``lam`` and of the off-diagonal couplings is
    verified first; a violation yields status ``inapplicable``.
    """
    part, beta, p = spec.partition, spec.beta, spec.p
    b1 = validate_b1(spec.coupling, part)
    if not b1.passed:
        return ConditionReport("B2", "inapplicable", notes=["B1 fails; B2 is not defined"])
    if p > 2:
        return ConditionReport("B2", "unsupported", notes=[f"no condition is available for p={p} > 2"])
    if not constants.available:
        return ConditionReport("B2", "inconclusive", notes=["constants unavailable (estimation failed)"])
    C = constants.effective_C_star
    diag = np.diag(beta)
    min_max_diag = min(diag[list(part.block(h))].max() for h in range(part.q))
    items: list[dict] = []
    notes = ["heuristic check: constants are numerical estimates"] if constants.heuristic else []

    if p == 2:
        for h in range(part.q):
            idx = list(part.block(h))
            if len(idx) == 1:
                continue
            if np.ptp(spec.lam[idx]) != 0:
                return ConditionReport("B2", "inapplicable",
                                       notes=notes + [f"p=2 branch needs equal lambda within block {h + 1}"])
            off = beta[np.ix_(idx, idx)][~np.eye(len(idx), dtype=bool)]
            if np.ptp(off) != 0:
                return ConditionReport("B2", "inapplicable",
                                       notes=notes + [f"p=2 branch needs constant off-diagonal beta in block {h + 1}"])

    for h in range(part.q):
        idx = list(part.block(h))
        size = len(idx)
        if size == 1:
            items.append({"block": h + 1, "lhs": None, "rhs": None, "margin": None, "ok": True,
                          "vacuous": True})
            continue
        sub = beta[np.ix_(idx, idx)]
        others = [m for m in range(spec.ell) if m not in idx]
        if p < 2:
            lhs = sub[~np.eye(size, dtype=bool)].min() * (min_max_diag / sub.max()) ** (p / (p - 1))
            rhs = C * (size - 1) ** (2 * p / (p - 1)) * _cross_block_abs_sum(beta, part, h)
        else:
            b_h = float(sub[0, 1])
            spread = max((np.sum(np.abs(beta[i, others] - beta[j, others])) for i in idx for j in idx),
                         default=0.0)
            lhs = b_h
            rhs = diag[idx].max() + C * ((size - 1) * b_h / min_max_diag) ** 2 * spread
        ok = _strict_gt(lhs, rhs, margin)
        items.append({"block": h + 1, "lhs": float(lhs), "rhs": float(rhs), "margin": float(lhs - rhs),
                      "ok": bool(ok), "vacuous": False})
    status = "pass" if all(it["ok"] for it in items) else "fail"
    return ConditionReport("B2", status, items, notes)


# -- coercivity ---------------------------------------------------------------

def check_coercivity(spec: ProblemSpec, domain: DiscreteDomain, margin: float = DEFAULT_MARGIN) -> ConditionReport:
    """Check ``lam_i > -lambda_1`` with the discrete first Dirichlet eigenvalue."""
    try:
        lam1 = smallest_eigenvalue(domain)
    except RuntimeError as exc:
        return ConditionReport("A1", "inconclusive", notes=[str(exc)])
    notes = [f"lambda_1 = {lam1:.12g}"]
    floor = -lam1
    if domain.descriptor.kind == "radial-truncated-space":
        floor = 0.0
        notes.append("truncated whole space: requiring lam_i > 0")
    items = []
    for i, l in enumerate(spec.lam):
        ok = l - floor > margin * max(1.0, abs(floor))
        items.append({"component": i + 1, "lambda": float(l), "bound": float(floor),
                      "margin": float(l - floor), "ok": bool(ok)})
    status = "pass" if all(it["ok"] for it in items) else "fail"
    return ConditionReport("A1", status, items, notes)


# -- constant estimation ---------------------------------------------------

def _bump(domain: DiscreteDomain, lo: int, hi: int, centre: float, width: float) -> np.ndarray:
    r = domain.r
    v = np.zeros(domain.n)
    v[lo:hi] = np.exp(-((r[lo:hi] - centre) / width) ** 2)
    v[lo:hi] *= np.sin(np.pi * (np.arange(lo, hi) - lo + 1) / (hi - lo + 1))
    return v


def min_sobolev_quotient(domain: DiscreteDomain, lam: float, p: float, lo: int | None = None,
                         hi: int | None = None, starts: int = 4, seed: int = 0, tol: float = 1e-10,
                         max_iter: int = 3000) -> tuple[float, np.ndarray]:
    """Minimise ``||v||_lam**2 / |v|_{2p}**2`` over fields supported on nodes ``[lo, hi)``.

    Projected gradient descent on the unit ``L^{2p}`` sphere, with the
    gradient taken in the ``<.,.>_lam`` metric, from ``starts`` bump-shaped
    initial fields. Returns the smallest quotient and its normalised
    minimiser.

    Raises
    ------
    RuntimeError
        If no start reached the gradient tolerance.
    """
    lo = domain.lo if lo is None else lo
    hi = domain.hi if hi is None else hi
    if hi - lo < 2:
        raise ValueError("support range needs at least two nodes")
    w = domain.weights
    rng = np.random.default_rng(seed)
    r_lo, r_hi = domain.r[lo], domain.r[hi - 1]

    def normalise(v):
        return v / np.sum(w * np.abs(v) ** (2 * p)) ** (1 / (2 * p))

    def grad(v):
        # metric gradient of the quotient at a unit-L^{2p} point (tangent by construction)
        q = norm_sq(v, domain, lam)
        return q, 2 * v - 2 * q * domain.riesz(w * np.abs(v) ** (2 * p - 2) * v, lam, lo, hi)

    best = (np.inf, None)
    for s in range(starts):
        if s == 0:
            v = _bump(domain, lo, hi, 0.5 * (r_lo + r_hi), r_hi - r_lo)
        else:
            v = _bump(domain, lo, hi, rng.uniform(r_lo, r_hi), rng.uniform(0.1, 1.0) * (r_hi - r_lo))
        v = normalise(np.abs(v) + 1e-3 * v.max() * (domain.apply_bc(np.ones(domain.n)) > 0) * (
            (np.arange(domain.n) >= lo) & (np.arange(domain.n) < hi)))
        q, g = grad(v)
        step = 0.5
        converged = False
        for _ in range(max_iter):
            gnorm = np.sqrt(max(domain.inner(g, g, lam), 0.0))
            if gnorm <= tol * q:
                converged = True
                break
            while True:
                trial = normalise(v - step * g)
                q_trial, g_trial = grad(trial)
                # the eps term keeps round-off from stalling the line search near the minimum
                if q_trial <= q - 1e-4 * step * gnorm**2 + 8 * np.finfo(float).eps * q or step < 1e-12:
                    break
                step *= 0.5
            if q_trial > q + 8 * np.finfo(float).eps * q:
                converged = gnorm <= 1e-7 * q
                break
            v, q, g = trial, q_trial, g_trial
            step = min(step * 2.0, 0.5)
        if converged and q < best[0]:
            best = (q, v)
    if best[1] is None:
        raise RuntimeError("Sobolev quotient minimisation did not converge")
    return float(best[0]), best[1]


def equal_measure_cells(domain: DiscreteDomain, q: int) -> list[tuple[int, int]]:
    """Split the free nodes into ``q`` consecutive ranges of roughly equal radial measure."""
    lo, hi = domain.lo, domain.hi
    cum = np.cumsum(domain.weights[lo:hi])
    targets = cum[-1] * np.arange(1, q) / q
    cuts = [lo] + [lo + int(np.searchsorted(cum, t)) + 1 for t in targets] + [hi]
    cells = list(zip(cuts[:-1], cuts[1:]))
    if any(b - a < 2 for a, b in cells):
        raise ValueError("grid too coarse for the requested number of cells")
    return cells


def estimate_constants(spec: ProblemSpec, domain: DiscreteDomain, safety_factor: float = 2.0,
                       starts: int = 4, seed: int = 0) -> ConditionConstants:
    """Numerical ``S``, ``d1`` and ``C_star`` for the discrete problem.

    ``S`` minimises the Sobolev quotient over the whole grid for every
    component and keeps the smallest. ``d1`` comes from disjointly supported
    scalar ground states on ``q`` equal-measure radial cells, one per block,
    each for the component with the largest self-coupling in its block.
    Both are estimates: the discrete space over-estimates the continuum
    infimum. A failed minimisation leaves the constant unset (``None``).
    """
    p = spec.p
    prov: dict = {}
    try:
        S = min(min_sobolev_quotient(domain, float(l), p, starts=starts, seed=seed)[0] for l in np.unique(spec.lam))
        prov["S"] = "estimated"
    except RuntimeError:
        S = None
        prov["S"] = "unavailable"
    try:
        cells = equal_measure_cells(domain, spec.q)
        total = 0.0
        diag = np.diag(spec.beta)
        for h, (a, b) in enumerate(cells):
            idx = list(spec.partition.block(h))
            i_h = idx[int(np.argmax(diag[idx]))]
            Q, _ = min_sobolev_quotient(domain, float(spec.lam[i_h]), p, a, b, starts=starts, seed=seed + h)
            total += Q ** (p / (p - 1))
        d1 = spec.nehari_factor * total
        prov["d1"] = "estimated"
    except (RuntimeError, ValueError):
        d1 = None
        prov["d1"] = "unavailable"
    return ConditionConstants.from_values(S, d1, p, safety_factor, prov)


def d1_energy_bound(spec: ProblemSpec, d1: float) -> float:
    """Upper bound ``d1 * (min_h max_{i in I_h} beta_ii)^(-1/(p-1))`` for the least energy."""
    diag = np.diag(spec.beta)
    m = min(diag[list(spec.partition.block(h))].max() for h in range(spec.q))
    return d1 * m ** (-1.0 / (spec.p - 1))
