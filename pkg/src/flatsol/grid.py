"""Uniform 1-D and radial grids, fields on them, and the integral functionals.

The discretisation is P1 (piecewise linear) with a lumped mass matrix:

* quadrature weights ``w_i`` integrate each hat function against the radial
  Jacobian ``|S^{N-1}| r^{N-1}`` exactly, so piecewise-linear integrands are
  integrated exactly and the weights sum to the domain measure;
* the Dirichlet energy ``T(u)`` is the exact integral of ``|u'|^2`` for the
  piecewise-linear interpolant, i.e. a quadratic form ``u^T K u`` with a
  tridiagonal stiffness matrix ``K``.

With these choices ``K u / w`` is the discrete ``-Δu`` that every solver
uses, so the discrete energy is exactly the Lyapunov function of the
discrete flow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np

from flatsol.errors import ConfigError, DomainError
from flatsol.model import ProblemParams

MIN_NODES = 16


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"interval needs a < b, got ({self.a}, {self.b})")

    dimension = 1

    @property
    def measure(self) -> float:
        return self.b - self.a

    def describe(self) -> str:
        return f"Interval(a={self.a!r}, b={self.b!r})"


@dataclass(frozen=True)
class Ball:
    """Ball of radius R in R^N, represented by the radial coordinate r ∈ [0, R].

    For N = 1 this is the symmetric interval (-R, R) folded at the origin.
    Balls are strictly star-shaped about their centre.
    """

    dimension: int
    radius: float

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DomainError(f"ball dimension must be >= 1, got {self.dimension}")
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")

    @property
    def sphere_area(self) -> float:
        """|S^{N-1}|; equals 2 for N = 1."""
        N = self.dimension
        return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)

    @property
    def measure(self) -> float:
        return self.sphere_area * self.radius**self.dimension / self.dimension

    def describe(self) -> str:
        return f"Ball(N={self.dimension}, R={self.radius!r})"


def _jacobian_integrals(r0: np.ndarray, r1: np.ndarray, N: int):
    """Per cell: ∫ r^{N-1}, ∫ r^{N-1} φ_left, ∫ r^{N-1} φ_right (Gauss, exact)."""
    xg, wg = np.polynomial.legendre.leggauss(N // 2 + 2)
    h = r1 - r0
    s = 0.5 * (xg + 1.0)  # local coordinate in [0, 1]
    r = r0[:, None] + h[:, None] * s[None, :]
    jac = r ** (N - 1) * (0.5 * wg)[None, :] * h[:, None]
    total = jac.sum(axis=1)
    left = (jac * (1.0 - s)[None, :]).sum(axis=1)
    right = (jac * s[None, :]).sum(axis=1)
    return total, left, right


@dataclass(frozen=True, eq=False)
class Grid:
    domain: Interval | Ball
    nodes: np.ndarray
    h: float
    weights: np.ndarray
    # stiffness coefficient per cell: T = Σ stiff_i (u_{i+1} - u_i)^2
    stiff: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def is_ball(self) -> bool:
        return isinstance(self.domain, Ball)

    @cached_property
    def dirichlet_mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[-1] = True
        if not self.is_ball:
            m[0] = True
        return m

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of the unknowns (nodes not fixed by the Dirichlet condition)."""
        return np.flatnonzero(~self.dirichlet_mask)

    @property
    def symmetry_node(self) -> int | None:
        return 0 if self.is_ball else None

    def stiffness_bands(self):
        """Diagonal and off-diagonal of the full n x n stiffness matrix K."""
        diag = np.zeros(self.n)
        diag[:-1] += self.stiff
        diag[1:] += self.stiff
        return diag, -self.stiff.copy()

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        du = self.stiff * np.diff(u)
        out = np.zeros_like(u)
        out[:-1] -= du
        out[1:] += du
        return out

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def describe(self) -> str:
        return f"{self.domain.describe()}, n={self.n}"


def build_grid(domain: Interval | Ball, n: int) -> Grid:
    if n < MIN_NODES:
        raise ConfigError(f"grid needs at least {MIN_NODES} nodes, got {n}")
    if isinstance(domain, Interval):
        nodes = np.linspace(domain.a, domain.b, n)
        h = (domain.b - domain.a) / (n - 1)
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        stiff = np.full(n - 1, 1.0 / h)
    elif isinstance(domain, Ball):
        nodes = np.linspace(0.0, domain.radius, n)
        h = domain.radius / (n - 1)
        total, left, right = _jacobian_integrals(nodes[:-1], nodes[1:], domain.dimension)
        area = domain.sphere_area
        w = np.zeros(n)
        w[:-1] += area * left
        w[1:] += area * right
        stiff = area * total / h**2
    else:
        raise DomainError(f"unsupported domain {domain!r}")
    for arr in (nodes, w, stiff):
        arr.setflags(write=False)
    return Grid(domain, nodes, h, w, stiff)


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise DomainError(f"field has shape {v.shape}, grid has {self.grid.n} nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def dirichlet_defect(self) -> float:
        return float(np.max(np.abs(self.values[self.grid.dirichlet_mask])))


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.n))


@dataclass(frozen=True)
class FunctionalBreakdown:
    """T, A, B, ∫u², H_λ = T - λ∫u², energy E and Pohozaev functional P."""

    T: float
    A: float
    B: float
    L2sq: float
    H: float
    E: float
    P: float


def breakdown_from_parts(T, A, B, L2sq, params: ProblemParams) -> FunctionalBreakdown:
    a, b, N, lam = params.alpha, params.beta, params.dimension, params.lam
    E = 0.5 * T + A / (1 + a) - lam * B / (1 + b)
    P = (N - 2) / (2 * N) * T + A / (1 + a) - lam * B / (1 + b)
    return FunctionalBreakdown(T, A, B, L2sq, T - lam * L2sq, E, P)


def _check_dims(grid: Grid, params: ProblemParams):
    if grid.dimension != params.dimension:
        raise DomainError(
            f"grid dimension {grid.dimension} does not match params dimension {params.dimension}"
        )


def dirichlet_energy(field: Field) -> float:
    return float(np.dot(field.grid.stiff, np.diff(field.values) ** 2))


def functionals(field: Field, params: ProblemParams) -> FunctionalBreakdown:
    grid = field.grid
    _check_dims(grid, params)
    u = np.abs(field.values)
    T = dirichlet_energy(field)
    A = grid.integrate(u ** (1 + params.alpha))
    B = grid.integrate(u ** (1 + params.beta))
    L2sq = grid.integrate(u * u)
    return breakdown_from_parts(T, A, B, L2sq, params)


def energy_gradient(field: Field, params: ProblemParams) -> np.ndarray:
    """Nodal gradient of the discrete energy (dual vector, no mass inverse)."""
    u = field.values
    au = np.abs(u)
    reac = np.sign(u) * (au**params.alpha - params.lam * au**params.beta)
    return field.grid.stiffness_apply(u) + field.grid.weights * reac


def h01_norm(field: Field) -> float:
    return math.sqrt(dirichlet_energy(field))


def l2_norm(field: Field) -> float:
    return math.sqrt(field.grid.integrate(field.values**2))


def linf_norm(field: Field) -> float:
    return float(np.max(np.abs(field.values)))


def h1_norm(field: Field) -> float:
    """Full H¹ norm (gradient plus L²), the whole-space variant."""
    return math.sqrt(dirichlet_energy(field) + field.grid.integrate(field.values**2))


def boundary_distance_profile(grid: Grid) -> Field:
    x = grid.nodes
    if grid.is_ball:
        d = grid.domain.radius - x
    else:
        d = np.minimum(x - grid.domain.a, grid.domain.b - x)
    d = np.maximum(d, 0.0)
    d[grid.dirichlet_mask] = 0.0
    return Field(grid, d)


def nondegeneracy_constant(field: Field, alpha: float) -> float:
    """inf over interior nodes of u / d^{2/(1-α)}."""
    u = field.values
    if np.any(u < 0):
        raise DomainError("nondegeneracy constant needs a nonnegative field")
    d = boundary_distance_profile(field.grid).values
    inner = ~field.grid.dirichlet_mask
    nu = 2.0 / (1.0 - alpha)
    return float(np.min(u[inner] / d[inner] ** nu))


def laplacian_apply(field: Field, params: ProblemParams | None = None) -> Field:
    """Finite-difference -Δu; zero at Dirichlet nodes.

    Interval: three-point stencil.  Ball: u'' + (N-1)/r u' with centred
    differences and the symmetric limit N u''(0) at the origin.
    """
    grid = field.grid
    if params is not None:
        _check_dims(grid, params)
    u = field.values
    h = grid.h
    out = np.zeros_like(u)
    d2 = (u[:-2] - 2 * u[1:-1] + u[2:]) / h**2
    if grid.is_ball:
        N = grid.dimension
        r = grid.nodes[1:-1]
        d1 = (u[2:] - u[:-2]) / (2 * h)
        out[1:-1] = -(d2 + (N - 1) / r * d1)
        out[0] = -N * 2.0 * (u[1] - u[0]) / h**2
    else:
        out[1:-1] = -d2
    out[grid.dirichlet_mask] = 0.0
    return Field(grid, out)


def discrete_laplacian(field: Field) -> Field:
    """-Δu as the solvers see it: K u / w (zero at Dirichlet nodes)."""
    g = field.grid
    out = g.stiffness_apply(field.values) / g.weights
    out[g.dirichlet_mask] = 0.0
    return Field(g, out)


def boundary_slope(field: Field) -> float:
    """One-sided second-order du/dν at the outer boundary node."""
    u, h = field.values, field.grid.h
    return float((3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h))


def sample(grid: Grid, fn) -> Field:
    return Field(grid, fn(np.asarray(grid.nodes)))


def write_field_csv(field: Field, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# {field.grid.describe()}\n")
        w = csv.writer(fh)
        w.writerow(["coordinate", "value"])
        for x, v in zip(field.grid.nodes, field.values):
            w.writerow([f"{x:.17g}", f"{v:.17g}"])
    return path


def read_field_csv(path, grid: Grid | None = None):
    """Read a snapshot CSV; returns (coordinates, values, header)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().lstrip("# ").strip()
        rows = list(csv.reader(fh))
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    if grid is not None:
        return Field(grid, data[:, 1])
    return data[:, 0], data[:, 1], header
