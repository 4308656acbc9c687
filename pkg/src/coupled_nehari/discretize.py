"""Radial finite-difference carrier for the function space of the system.

All integrals are taken in the radial variable with weight ``r**(N-1)``;
the surface area of the unit sphere is dropped everywhere, which rescales
the energy by a positive constant and changes nothing else.

Grid conventions
----------------
``interval`` / ``annulus``
    uniform nodes ``r_in, r_in + h, ..., r_out`` with Dirichlet values at
    both ends.
``ball`` / ``radial-truncated-space``
    half-cell offset nodes ``(k + 1/2) h`` so that no node sits on ``r = 0``;
    the last node is the outer radius (Dirichlet). Regularity ``u'(0) = 0``
    is the natural boundary condition of the zero-weight face at the origin.

The stiffness form is ``sum_f r_f**(N-1) (v[k+1] - v[k])**2 / h`` over the
faces ``r_f`` midway between neighbouring nodes and the mass weights are the
exact ``r**(N-1)`` measures of the dual cells, which makes the stencil exact
on ``a + b r**2`` at the centre node and second order everywhere.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

DOMAIN_KINDS = ("interval", "ball", "annulus", "radial-truncated-space")


@dataclass(frozen=True)
class DomainDescriptor:
    """Geometry and resolution of a radial (or one-dimensional) domain."""

    kind: str
    N: int
    radii: tuple[float, float]
    grid_points: int = 256
    truncation_radius: float | None = None
    orbit_dimension: int | None = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}; expected one of {DOMAIN_KINDS}")
        if int(self.N) < 1:
            raise ValueError("dimension N must be >= 1")
        if int(self.grid_points) < 16:
            raise ValueError("grid_points must be >= 16")
        r_in, r_out = (float(x) for x in self.radii)
        object.__setattr__(self, "radii", (r_in, r_out))
        if self.kind == "radial-truncated-space":
            if self.truncation_radius is None or self.truncation_radius <= 0:
                raise ValueError("radial-truncated-space needs a positive truncation_radius")
            object.__setattr__(self, "radii", (0.0, float(self.truncation_radius)))
        elif self.kind == "ball":
            if r_in != 0.0:
                raise ValueError("a ball has inner radius 0")
        elif self.kind == "annulus":
            if r_in <= 0.0:
                raise ValueError("an annulus needs a positive inner radius")
        if not self.radii[1] > self.radii[0] >= 0.0:
            raise ValueError("radii must satisfy 0 <= r_inner < r_outer")

    @property
    def outer_radius(self) -> float:
        return self.radii[1]

    @property
    def centred(self) -> bool:
        """True when the domain contains the origin (regularity condition at r=0)."""
        return self.kind in ("ball", "radial-truncated-space")

    @property
    def orbit_dim(self) -> int:
        """Minimal orbit dimension d of the symmetry group acting on the domain."""
        if self.orbit_dimension is not None:
            return int(self.orbit_dimension)
        return 0 if self.kind == "interval" else int(self.N) - 1

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "N": int(self.N), "radii": list(self.radii),
               "grid_points": int(self.grid_points)}
        if self.truncation_radius is not None:
            out["truncation_radius"] = float(self.truncation_radius)
        if self.orbit_dimension is not None:
            out["orbit_dimension"] = int(self.orbit_dimension)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DomainDescriptor":
        kind = data.get("kind", "ball")
        radii = data.get("radii")
        if radii is None:
            radii = (0.0, float(data.get("truncation_radius") or data.get("radius", 1.0)))
        return cls(kind=kind, N=int(data.get("N", 3)), radii=tuple(radii),
                   grid_points=int(data.get("grid_points", 256)),
                   truncation_radius=data.get("truncation_radius"),
                   orbit_dimension=data.get("orbit_dimension"))

    def with_grid(self, grid_points: int) -> "DomainDescriptor":
        return DomainDescriptor(self.kind, self.N, self.radii, grid_points,
                                self.truncation_radius, self.orbit_dimension)


def default_truncation_radius(lam: float, tail: float = 1e-8) -> float:
    """Radius beyond which an exponentially decaying ground state is below ``tail``.

    Uses the decay rate ``sqrt(lam)`` with a generous allowance for the peak
    amplitude.
    """
    if lam <= 0:
        raise ValueError("truncation needs lam > 0 (exponential decay)")
    return float((np.log(1.0 / tail) + 4.0) / np.sqrt(lam))


class DiscreteDomain:
    """Assembled grid, quadrature weights and tridiagonal stiffness form.

    Parameters
    ----------
    descriptor : DomainDescriptor

    Attributes
    ----------
    r : ndarray, shape (n,)
        Node radii, boundary nodes included.
    weights : ndarray, shape (n,)
        Dual-cell measures ``int r**(N-1) dr``; used for every L^q integral.
    face : ndarray, shape (n - 1,)
        Stiffness coefficients ``r_f**(N-1) / h`` of the faces between nodes.
    lo, hi : int
        The free (non-Dirichlet) nodes are ``lo <= k < hi``.
    """

    def __init__(self, descriptor: DomainDescriptor):
        self.descriptor = descriptor
        n = int(descriptor.grid_points)
        N = int(descriptor.N)
        r_in, r_out = descriptor.radii
        if descriptor.centred:
            h = r_out / (n - 0.5)
            r = (np.arange(n) + 0.5) * h
            r[-1] = r_out
            self.lo, self.hi = 0, n - 1
        else:
            h = (r_out - r_in) / (n - 1)
            r = r_in + np.arange(n) * h
            r[-1] = r_out
            self.lo, self.hi = 1, n - 1
        faces = 0.5 * (r[1:] + r[:-1])
        left = np.concatenate([[0.0 if descriptor.centred else r_in], faces])
        right = np.concatenate([faces, [r_out]])
        self.h = float(h)
        self.n = n
        self.N = N
        self.r = r
        self.weights = (right**N - left**N) / N
        self.face = faces ** (N - 1) / h
        self._chol_cache: dict[tuple[float, int, int], np.ndarray] = {}
        for arr in (self.r, self.weights, self.face):
            arr.setflags(write=False)

    # -- basic structure -------------------------------------------------
    @property
    def free(self) -> slice:
        return slice(self.lo, self.hi)

    @property
    def measure(self) -> float:
        """Exact radial measure of the domain (angular factor omitted)."""
        r_in, r_out = self.descriptor.radii
        if self.descriptor.centred:
            r_in = 0.0
        return (r_out**self.N - r_in**self.N) / self.N

    def zeros(self, ell: int | None = None) -> np.ndarray:
        return np.zeros(self.n) if ell is None else np.zeros((ell, self.n))

    def apply_bc(self, values: np.ndarray) -> np.ndarray:
        """Return a copy with Dirichlet nodes set to zero."""
        out = np.array(values, dtype=float, copy=True)
        out[..., : self.lo] = 0.0
        out[..., self.hi:] = 0.0
        return out

    # -- linear algebra on the free nodes -------------------------------
    def stiffness_apply(self, v: np.ndarray) -> np.ndarray:
        """Weak action of the stiffness form: ``(A v)_k`` for every node (rows of Dirichlet nodes included)."""
        v = np.asarray(v, dtype=float)
        flux = self.face * np.diff(v, axis=-1)
        out = np.zeros_like(v)
        out[..., :-1] -= flux
        out[..., 1:] += flux
        return out

    def _banded(self, lam: float, lo: int, hi: int) -> np.ndarray:
        key = (float(lam), lo, hi)
        chol = self._chol_cache.get(key)
        if chol is None:
            diag = np.zeros(self.n)
            diag[:-1] += self.face
            diag[1:] += self.face
            diag = diag + lam * self.weights
            ab = np.zeros((2, hi - lo))
            ab[1] = diag[lo:hi]
            ab[0, 1:] = -self.face[lo:hi - 1]
            chol = cholesky_banded(ab, lower=False)
            self._chol_cache[key] = chol
        return chol

    def riesz(self, covector: np.ndarray, lam: float, lo: int | None = None,
              hi: int | None = None) -> np.ndarray:
        """Solve ``(A + lam W) x = covector`` on the free nodes ``[lo, hi)``.

        This maps a weak (dual) gradient to its representative in the
        ``<.,.>_lam`` inner product. Values outside ``[lo, hi)`` are zero.
        """
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        out = np.zeros(self.n)
        out[lo:hi] = cho_solve_banded((self._banded(lam, lo, hi), False), covector[lo:hi])
        return out

    def inner(self, u: np.ndarray, v: np.ndarray, lam: float) -> float:
        """Bilinear form ``int u' v' + lam u v`` (radial weight included)."""
        return float(np.sum(self.face * np.diff(u) * np.diff(v)) + lam * np.sum(self.weights * u * v))

    def integrate(self, f: np.ndarray) -> float | np.ndarray:
        return np.sum(np.asarray(f) * self.weights, axis=-1)

    def laplacian(self, v: np.ndarray) -> np.ndarray:
        """Strong-form ``-Delta v`` at the free nodes (zero elsewhere)."""
        out = np.zeros_like(np.asarray(v, dtype=float))
        weak = self.stiffness_apply(v)
        out[..., self.lo:self.hi] = weak[..., self.lo:self.hi] / self.weights[self.lo:self.hi]
        return out

    def __repr__(self):
        d = self.descriptor
        return f"DiscreteDomain(kind={d.kind!r}, N={d.N}, radii={d.radii}, n={self.n})"


def assemble(descriptor: DomainDescriptor) -> DiscreteDomain:
    return DiscreteDomain(descriptor)


@dataclass(frozen=True)
class BlockFunction:
    """``ell`` scalar grid fields on a shared domain, grouped into blocks.

    ``values[i]`` holds the nodal values of component ``i`` (0-based).
    """

    domain: DiscreteDomain
    values: np.ndarray
    bounds: tuple[int, ...] = field(default=())

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, ndmin=2)
        if vals.shape[1] != self.domain.n:
            raise ValueError(f"field length {vals.shape[1]} does not match grid size {self.domain.n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite field values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        bounds = tuple(int(b) for b in self.bounds) or (0, vals.shape[0])
        if bounds[0] != 0 or bounds[-1] != vals.shape[0] or any(np.diff(bounds) <= 0):
            raise ValueError(f"block bounds {bounds} inconsistent with {vals.shape[0]} components")
        object.__setattr__(self, "bounds", bounds)

    @property
    def ell(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return len(self.bounds) - 1

    def block(self, h: int) -> np.ndarray:
        return self.values[self.bounds[h]:self.bounds[h + 1]]

    def component_norms_sq(self, lam: Sequence[float]) -> np.ndarray:
        return np.array([norm_sq(self.values[i], self.domain, lam[i]) for i in range(self.ell)])

    def block_norms_sq(self, lam: Sequence[float]) -> np.ndarray:
        c = self.component_norms_sq(lam)
        return np.array([c[self.bounds[h]:self.bounds[h + 1]].sum() for h in range(self.q)])

    def scaled(self, s: Sequence[float]) -> "BlockFunction":
        """Block-wise scaling ``(s_1 u_1, ..., s_q u_q)``."""
        factors = np.repeat(np.asarray(s, dtype=float), np.diff(self.bounds))
        return self.replace(self.values * factors[:, None])

    def replace(self, values: np.ndarray) -> "BlockFunction":
        return BlockFunction(self.domain, values, self.bounds)

    def __neg__(self):
        return self.replace(-self.values)


# -- integrals and the energy --------------------------------------------

def norm_sq(v: np.ndarray, domain: DiscreteDomain, lam: float) -> float:
    """Discrete ``||v||_lam**2 = int (|v'|**2 + lam v**2) r**(N-1) dr``."""
    v = np.asarray(v, dtype=float)
    return float(np.sum(domain.face * np.diff(v) ** 2) + lam * np.sum(domain.weights * v * v))


def mixed_integral(u: np.ndarray, v: np.ndarray, p: float, domain: DiscreteDomain) -> float:
    """Discrete ``int |u|**p |v|**p r**(N-1) dr``."""
    return float(np.sum(domain.weights * np.abs(u) ** p * np.abs(v) ** p))


def interaction_matrix(values: np.ndarray, p: float, domain: DiscreteDomain) -> np.ndarray:
    """All mixed integrals ``P[i, j] = int |u_i|**p |u_j|**p`` at once."""
    a = np.abs(values) ** p
    return (a * domain.weights) @ a.T


def energy(u: BlockFunction, spec) -> float:
    """The discrete energy ``1/2 sum ||u_i||_i**2 - 1/(2p) sum beta_ij int |u_i|^p |u_j|^p``."""
    p = spec.p
    quad = sum(norm_sq(u.values[i], u.domain, spec.lam[i]) for i in range(u.ell))
    inter = float(np.sum(spec.beta * interaction_matrix(u.values, p, u.domain)))
    return 0.5 * quad - inter / (2 * p)


def _odd_power(x: np.ndarray, e: float) -> np.ndarray:
    """``|x|**e * sign(x)``, extended by 0 at x = 0 (continuous for e > 0)."""
    return np.sign(x) * np.abs(x) ** e


def nonlinearity(values: np.ndarray, beta: np.ndarray, p: float) -> np.ndarray:
    """Nodal ``sum_j beta_ij |u_j|**p |u_i|**(p-2) u_i`` for every component."""
    return (beta @ np.abs(values) ** p) * _odd_power(values, p - 1)


def energy_gradient(u: BlockFunction, spec, weak: bool = False) -> BlockFunction:
    """Gradient of the discrete energy.

    With ``weak=True`` the covector ``dJ/du_i[k]`` is returned, so that
    ``sum(grad.values * w.values)`` is the directional derivative along ``w``.
    Otherwise the strong-form residual ``(-Delta + lam_i) u_i - sum_j ...`` is
    returned at the free nodes. Dirichlet nodes carry zeros in both forms.
    """
    d = u.domain
    vals = u.values
    lam = np.asarray(spec.lam, dtype=float)[:, None]
    cov = d.stiffness_apply(vals) + d.weights * (lam * vals - nonlinearity(vals, spec.beta, spec.p))
    cov = d.apply_bc(cov)
    if weak:
        return u.replace(cov)
    strong = np.zeros_like(cov)
    strong[:, d.lo:d.hi] = cov[:, d.lo:d.hi] / d.weights[d.lo:d.hi]
    return u.replace(strong)


def smallest_eigenvalue(domain: DiscreteDomain, tol: float = 1e-13, max_iter: int = 500) -> float:
    """First Dirichlet eigenvalue of the discrete ``-Delta`` by inverse power iteration.

    Raises
    ------
    RuntimeError
        If the Rayleigh quotient has not settled after ``max_iter`` sweeps.
    """
    x = np.zeros(domain.n)
    x[domain.free] = 1.0
    mu_old = np.inf
    for _ in range(max_iter):
        y = domain.riesz(domain.weights * x, 0.0)
        y /= np.sqrt(np.sum(domain.weights * y * y))
        mu = norm_sq(y, domain, 0.0)
        x = y
        if abs(mu - mu_old) <= tol * abs(mu):
            return float(mu)
        mu_old = mu
    raise RuntimeError("inverse iteration for the first eigenvalue did not converge")


# -- CSV serialisation -----------------------------------------------------

def fields_to_csv(u: BlockFunction, header_comments: Iterable[str] = ()) -> str:
    """Serialise ``r,u_1,...,u_ell`` with 17 significant digits."""
    buf = io.StringIO()
    for line in header_comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r"] + [f"u_{i + 1}" for i in range(u.ell)])
    for k in range(u.domain.n):
        writer.writerow([f"{u.domain.r[k]:.17g}"] + [f"{u.values[i, k]:.17g}" for i in range(u.ell)])
    return buf.getvalue()


def fields_from_csv(text: str, domain: DiscreteDomain, bounds: Sequence[int] = ()) -> BlockFunction:
    rows = [row for row in csv.reader(io.StringIO(text)) if row and not row[0].startswith("#")]
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if header[0] != "r" or data.shape[0] != domain.n:
        raise ValueError("CSV does not match the domain grid")
    if not np.allclose(data[:, 0], domain.r, rtol=1e-12, atol=1e-14):
        raise ValueError("CSV radii differ from the domain grid")
    return BlockFunction(domain, data[:, 1:].T, tuple(bounds))
