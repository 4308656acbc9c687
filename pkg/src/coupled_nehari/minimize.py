"""Multistart descent of the reduced functional on the product of block spheres."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .discretize import BlockFunction, DiscreteDomain, energy, energy_gradient
from .model import ConditionConstants, d1_energy_bound, equal_measure_cells, min_sobolev_quotient
from .nehari import (DEFAULT_CAP, OutsideDomainError, ScaleSolveError, block_inner, evaluate_psi, nehari_residuals,
                     pairing, psi_gradient_at, to_unit_blocks)

FULLY = "fully-nontrivial"
SEMI = "semitrivial"
INDETERMINATE = "indeterminate"

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverConfig:
    """Descent and restart parameters.

    ``gradient_tolerance`` bounds the tangent gradient norm relative to
    ``max(1, Psi)``.
    """

    max_iterations: int = 3000
    gradient_tolerance: float = 1e-8
    backtracking: float = 0.5
    initial_step: float = 0.5
    armijo: float = 1e-4
    restart_count: int = 8
    escape_cap: float = DEFAULT_CAP
    delta: float = 1e-4
    seed: int = 0
    threads: int | None = None
    escape_restart: bool = True
    escape_epsilon: float = 1e-2
    memory: int = 8

    def __post_init__(self):
        if self.gradient_tolerance <= 0 or self.delta <= 0 or self.escape_cap <= 0:
            raise ValueError("tolerances must be positive")
        if self.memory < 0:
            raise ValueError("memory must be non-negative")
        if self.restart_count < 1:
            raise ValueError("restart_count must be >= 1")
        if not 0 < self.backtracking < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get("NEHARI_THREADS")
        return max(1, int(env)) if env else 1


@dataclass
class SolveReport:
    energy: float
    norms_2p: list[float]
    residuals: list[float]
    nehari_residuals: list[float]
    classification: str
    converged: bool
    gradient_norm: float
    iterations: int
    restarts_used: int
    restart_energies: list[float | None]
    best_restart: int
    d1_bound: float | None = None
    below_d1_bound: bool | None = None
    notes: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = True) -> dict:
        out = asdict(self)
        if not include_time:
            out.pop("wall_time")
        return out


class SolveFailure(RuntimeError):
    """Every restart failed to produce a point of the constraint set."""


# -- diagnostics ------------------------------------------------------------

def lp_norms(u: BlockFunction, p: float) -> np.ndarray:
    """``|u_i|_{2p}`` for every component."""
    return np.sum(u.domain.weights * np.abs(u.values) ** (2 * p), axis=1) ** (1 / (2 * p))


def classify_solution(u: BlockFunction, spec, delta: float = 1e-4) -> str:
    """Label ``u`` by which components carry ``L^{2p}`` mass.

    A component is alive when ``|u_i|_{2p} >= delta * max_j |u_j|_{2p}``.
    With every component alive the result is fully nontrivial; with a dead
    component but a live one in every block it is semitrivial. When all
    blocks are singletons a block-wise nontrivial point is fully nontrivial.
    """
    n = lp_norms(u, spec.p)
    top = n.max()
    if top <= 0:
        return INDETERMINATE
    alive = n >= delta * top
    if alive.all():
        return FULLY
    bounds = spec.bounds
    if all(alive[bounds[h]:bounds[h + 1]].any() for h in range(spec.q)):
        return FULLY if spec.q == spec.ell else SEMI
    return INDETERMINATE


def euler_lagrange_residual(u: BlockFunction, spec) -> np.ndarray:
    """Weighted ``L^2`` norm of the strong residual of each equation."""
    strong = energy_gradient(u, spec).values
    return np.sqrt(np.sum(u.domain.weights * strong**2, axis=1))


# -- initial data ---------------------------------------------------------

class _Profiles:
    """Cache of scalar ground-state shapes per ``lam`` (minimisers of the Sobolev quotient)."""

    def __init__(self, domain, p):
        self.domain, self.p = domain, p
        self.cache: dict[float, np.ndarray] = {}

    def __call__(self, lam: float) -> np.ndarray:
        lam = float(lam)
        if lam not in self.cache:
            _, v = min_sobolev_quotient(self.domain, lam, self.p, starts=1)
            self.cache[lam] = np.abs(v)
        return self.cache[lam]


def initial_guess(spec, domain: DiscreteDomain, rng: np.random.Generator, profiles: _Profiles,
                  index: int) -> BlockFunction:
    """Start ``index`` of the multistart schedule (index 0 is deterministic)."""
    r = domain.r
    r_in, R = domain.descriptor.radii
    vals = np.zeros((spec.ell, domain.n))
    diag = np.diag(spec.beta)
    if index == 0 and spec.q == 1:
        from .synchronized import solve_sync
        sync = solve_sync(spec.beta, spec.p)
        c = sync.c if sync is not None and np.all(sync.c > 0) else np.ones(spec.ell)
        base = profiles(float(np.mean(spec.lam)))
        vals[:] = c[:, None] * base
    elif index == 0:
        cells = equal_measure_cells(domain, spec.q)
        for h, (a, b) in enumerate(cells):
            idx = list(spec.partition.block(h))
            prof = np.zeros(domain.n)
            prof[a:b] = np.sin(np.pi * (np.arange(a, b) - a + 1) / (b - a + 1))
            for i in idx:
                vals[i] = prof / np.sqrt(diag[i])
    else:
        for h in range(spec.q):
            idx = list(spec.partition.block(h))
            centre = rng.uniform(r_in, R)
            width = rng.uniform(0.2, 1.0) * (R - r_in)
            bump = np.exp(-((r - centre) / width) ** 2)
            for i in idx:
                vals[i] = profiles(spec.lam[i]) * bump * rng.uniform(0.5, 1.5)
    vals = domain.apply_bc(vals)
    vals[:, domain.lo:domain.hi] += 1e-6 * vals.max()
    return BlockFunction(domain, domain.apply_bc(vals), spec.bounds)


# -- descent ----------------------------------------------------------------

@dataclass
class _RunResult:
    unit: BlockFunction
    value: float
    scales: np.ndarray
    gnorm: float
    iterations: int
    converged: bool
    history: list[float]


def _tangent(v: np.ndarray, unit: BlockFunction, lam) -> np.ndarray:
    """Remove the component along ``unit`` in every block."""
    coef = block_inner(unit.replace(v), unit, lam)
    return v - np.repeat(coef, np.diff(unit.bounds))[:, None] * unit.values


def _direction(gl: np.ndarray, pairs, unit: BlockFunction, lam, fallback: float) -> np.ndarray:
    """L-BFGS two-loop recursion in the ``<.,.>_i`` inner products; plain BB scaling without pairs."""
    dot = lambda x, y: pairing(unit.replace(x), unit.replace(y), lam)
    q = gl.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= dot(s, y) / dot(y, y)
    else:
        q *= fallback
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        q += (a - rho * dot(y, q)) * s
    return -_tangent(q, unit, lam)


def _descend(u0: BlockFunction, spec, cfg: SolverConfig) -> _RunResult:
    """Tangent L-BFGS descent of ``log Psi`` with Armijo backtracking.

    ``log Psi`` has the same minimisers as ``Psi`` and a gradient that does
    not grow with the size of the scales. Curvature pairs are carried
    between iterates by projection onto the new tangent space; with
    ``memory = 0`` the step is the Barzilai-Borwein one.
    """
    ev = evaluate_psi(u0, spec, cfg.escape_cap)
    lam = spec.lam
    g = psi_gradient_at(ev, spec)
    gl = g.values / ev.value
    gg = pairing(g, g, lam)
    bb = cfg.initial_step
    pairs: list = []
    history = [ev.value]
    for _ in range(cfg.max_iterations):
        gnorm = np.sqrt(max(gg, 0.0))
        if gnorm <= cfg.gradient_tolerance * max(1.0, ev.value):
            break
        unit = ev.unit
        f0 = np.log(ev.value)
        d = _direction(gl, pairs if cfg.memory else [], unit, lam, bb)
        slope = pairing(unit.replace(gl), unit.replace(d), lam)
        if not slope < 0:
            pairs.clear()
            d = -bb * gl
            slope = -bb * gg / ev.value**2
        step = 1.0
        accepted = None
        for _ in range(60):
            trial = unit.replace(unit.values + step * d)
            try:
                ev_t = evaluate_psi(trial, spec, cfg.escape_cap)
            except (OutsideDomainError, ScaleSolveError):
                step *= cfg.backtracking
                continue
            f_t = np.log(ev_t.value)
            decrease = -cfg.armijo * step * slope
            if f_t <= f0 - decrease:
                accepted = ev_t
                break
            if decrease < 16 * _EPS and f_t <= f0 + 16 * _EPS:
                # the sufficient-decrease test is below round-off; take the step
                accepted = ev_t
                break
            step *= cfg.backtracking
        if accepted is None:
            if not pairs:
                break
            pairs.clear()
            continue
        ev = accepted
        g = psi_gradient_at(ev, spec)
        gl_new = g.values / ev.value
        gg = pairing(g, g, lam)
        # transport the old data to the new tangent space before forming the pair
        s_vec = _tangent(step * d, ev.unit, lam)
        y_vec = gl_new - _tangent(gl, ev.unit, lam)
        sy = pairing(ev.unit.replace(s_vec), ev.unit.replace(y_vec), lam)
        if sy > 1e-12 * np.sqrt(pairing(ev.unit.replace(s_vec), ev.unit.replace(s_vec), lam)
                                * pairing(ev.unit.replace(y_vec), ev.unit.replace(y_vec), lam)):
            bb = float(np.clip(pairing(ev.unit.replace(s_vec), ev.unit.replace(s_vec), lam) / sy, 1e-8, 1e3))
            pairs = [(_tangent(s, ev.unit, lam), _tangent(y, ev.unit, lam), r) for s, y, r in pairs]
            pairs.append((s_vec, y_vec, 1.0 / sy))
            pairs = pairs[-cfg.memory:] if cfg.memory else []
        gl = gl_new
        history.append(ev.value)
    gnorm = float(np.sqrt(max(gg, 0.0)))
    converged = gnorm <= cfg.gradient_tolerance * max(1.0, ev.value)
    return _RunResult(ev.unit, ev.value, ev.scales, gnorm, len(history) - 1, converged, history)


def _run_start(spec, domain, cfg, index, init, profiles):
    rng = np.random.default_rng([cfg.seed, index])
    for attempt in range(20):
        u0 = init if (init is not None and attempt == 0) else initial_guess(spec, domain, rng, profiles,
                                                                            index if attempt == 0 else index + 1)
        try:
            return _descend(to_unit_blocks(u0, spec), spec, cfg)
        except (OutsideDomainError, ScaleSolveError):
            continue
    return None


def minimize_psi(spec, domain: DiscreteDomain, config: SolverConfig | None = None,
                 init: BlockFunction | None = None,
                 constants: ConditionConstants | None = None) -> tuple[BlockFunction, SolveReport]:
    """Least-energy block-wise nontrivial candidate by multistart descent of ``Psi``.

    Returns the best point found on the constraint set (sign-cleaned to
    non-negative components) and its report. When ``init`` is given it
    replaces the first start.

    Raises
    ------
    SolveFailure
        If no start could be placed on the constraint set.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    profiles = _Profiles(domain, spec.p)
    profiles(float(np.mean(spec.lam)))
    for lam in np.unique(spec.lam):
        profiles(lam)
    tasks = range(cfg.restart_count)
    workers = cfg.worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda k: _run_start(spec, domain, cfg, k, init if k == 0 else None, profiles),
                                 tasks))
    else:
        runs = [_run_start(spec, domain, cfg, k, init if k == 0 else None, profiles) for k in tasks]
    energies = [None if r is None else float(r.value) for r in runs]
    valid = [(r.value, k) for k, r in enumerate(runs) if r is not None]
    if not valid:
        raise SolveFailure("no start could be placed on the constraint set")
    _, best_k = min(valid)
    best = runs[best_k]
    notes = [f"best over {len(valid)} restarts; global optimality is not certified"]
    u_star = _finish(best, spec)
    label = classify_solution(u_star, spec, cfg.delta)

    if label == SEMI and cfg.escape_restart:
        improved = _escape_restart(u_star, spec, domain, cfg)
        if improved is not None and improved.value < best.value:
            notes.append(f"escape-direction restart lowered the energy by {best.value - improved.value:.3e}")
            best = improved
            u_star = _finish(best, spec)
            label = classify_solution(u_star, spec, cfg.delta)
        else:
            notes.append("escape-direction restart did not lower the energy")
    if spec.q == spec.ell:
        notes.append("all blocks are singletons: block-wise nontrivial implies fully nontrivial")

    bound = below = None
    if constants is not None and constants.d1 is not None:
        bound = d1_energy_bound(spec, constants.d1)
        below = bool(best.value <= bound)
    report = SolveReport(
        energy=float(energy(u_star, spec)),
        norms_2p=lp_norms(u_star, spec.p).tolist(),
        residuals=euler_lagrange_residual(u_star, spec).tolist(),
        nehari_residuals=nehari_residuals(u_star, spec).tolist(),
        classification=label,
        converged=bool(best.converged),
        gradient_norm=best.gnorm,
        iterations=int(best.iterations),
        restarts_used=len(valid),
        restart_energies=energies,
        best_restart=int(best_k),
        d1_bound=bound,
        below_d1_bound=below,
        notes=notes,
        wall_time=time.perf_counter() - t0,
    )
    return u_star, report


def _finish(run: _RunResult, spec) -> BlockFunction:
    u = run.unit.scaled(run.scales)
    return u.replace(np.abs(u.values))


def _escape_restart(u: BlockFunction, spec, domain, cfg) -> _RunResult | None:
    """Re-run descent after switching on each dead component along a live one of its block."""
    n = lp_norms(u, spec.p)
    dead = np.flatnonzero(n < cfg.delta * n.max())
    best = None
    for i0 in dead:
        h = spec.partition.block_of(int(i0))
        idx = [i for i in spec.partition.block(h) if i != i0]
        if not idx:
            continue
        i_star = idx[int(np.argmax(n[idx]))]
        vals = np.array(u.values)
        vals[i0] = cfg.escape_epsilon * vals[i_star]
        try:
            run = _descend(to_unit_blocks(u.replace(vals), spec), spec, cfg)
        except (OutsideDomainError, ScaleSolveError):
            continue
        if best is None or run.value < best.value:
            best = run
    return best


def with_overrides(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, **kw)
