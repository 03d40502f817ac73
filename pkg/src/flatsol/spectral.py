"""Principal eigenpairs of Dirichlet Schrödinger-type operators on grids.

Every operator here is a symmetric tridiagonal matrix after the usual
diagonal similarity with the lumped mass, so one small eigen-solver serves
the Dirichlet Laplacian, the linearisation at a ground state and the
Hardy-potential quotients.  The lowest eigenvalue is located by Sturm
counts, which cannot lock onto a higher mode, and the eigenvector comes from
inverse iteration shifted just below it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import solve_banded

from flatsol.errors import DomainError, SolverError
from flatsol.grid import Field, Grid

RESIDUAL_TOL = 1e-8


@dataclass
class EigenResult:
    eigenvalue: float
    eigenfield: Field
    iterations: int
    residual: float
    floor_sensitivity: float | None = None

    def to_json(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "residual": self.residual,
            "iterations": self.iterations,
            "floor_sensitivity": self.floor_sensitivity,
            "grid": self.eigenfield.grid.describe(),
        }


def _tri_matvec(d, e, x):
    y = d * x
    y[:-1] += e * x[1:]
    y[1:] += e * x[:-1]
    return y


def _tri_solve(d, e, shift, x):
    ab = np.zeros((3, d.size))
    ab[0, 1:] = e
    ab[1] = d - shift
    ab[2, :-1] = e
    return solve_banded((1, 1), ab, x, check_finite=False)


@numba.njit(cache=True)
def _count_below(d, e, x):
    # Sturm count: number of eigenvalues < x (signs of the LDL^T pivots)
    count = 0
    piv = d[0] - x
    if piv < 0.0:
        count += 1
    for i in range(1, d.size):
        if piv == 0.0:
            piv = 1e-300
        piv = d[i] - x - e[i - 1] * e[i - 1] / piv
        if piv < 0.0:
            count += 1
    return count


def lowest_eigenpair(d: np.ndarray, e: np.ndarray, tol: float = RESIDUAL_TOL,
                     max_iter: int = 200):
    """Smallest eigenpair of the symmetric tridiagonal matrix (d, e).

    The eigenvalue is bracketed by Sturm-sequence bisection, then inverse
    iteration shifted just below it (a few steps at most) produces the
    vector (Rayleigh-quotient shifts polish it if needed).  Returns
    (value, unit vector with nonnegative sum, iterations, residual).
    """
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    n = d.size
    if n == 1:
        return float(d[0]), np.ones(1), 0, 0.0
    rad = np.zeros(n)
    rad[:-1] += np.abs(e)
    rad[1:] += np.abs(e)
    lo = float(np.min(d - rad))
    hi = float(np.min(d + rad))
    scale = max(abs(lo), abs(hi), 1.0)
    while hi - lo > 1e-13 * scale:
        mid = 0.5 * (lo + hi)
        if _count_below(d, e, mid) >= 1:
            hi = mid
        else:
            lo = mid
    sigma = lo - 1e-12 * scale
    x = np.ones(n) / math.sqrt(n)
    mu, res, it = sigma, math.inf, 0
    while it < max_iter:
        it += 1
        y = _tri_solve(d, e, sigma, x)
        if not np.all(np.isfinite(y)):
            sigma -= 1e-10 * scale
            continue
        x = y / np.linalg.norm(y)
        ax = _tri_matvec(d, e, x)
        mu = float(x @ ax)
        res = float(np.linalg.norm(ax - mu * x))
        if res < tol:
            break
        if it > 3:
            sigma = mu
    if x.sum() < 0:
        x = -x
    if not res < tol:
        raise SolverError("eigen-iteration stagnated", residual=res, eigenvalue=mu,
                          iterations=it)
    return mu, x, it, res


def _free_tridiagonal(grid: Grid, free: np.ndarray):
    diag, off = grid.stiffness_bands()
    return diag[free], off[free[:-1]], grid.weights[free]


def _generalized_lowest(Kd, Ke, m, tol=RESIDUAL_TOL):
    # K x = μ diag(m) x  via  m^{-1/2} K m^{-1/2}
    s = 1.0 / np.sqrt(m)
    d = Kd * s * s
    e = Ke * s[:-1] * s[1:]
    mu, y, it, res = lowest_eigenpair(d, e, tol)
    return mu, y * s, it, res


def _embed(grid: Grid, free: np.ndarray, vals: np.ndarray, weights: np.ndarray) -> Field:
    full = np.zeros(grid.n)
    full[free] = vals / math.sqrt(float(np.dot(weights, vals * vals)))
    return Field(grid, full)


def principal_dirichlet_eigen(grid: Grid, tol: float = RESIDUAL_TOL) -> EigenResult:
    """λ₁ and the L²-normalised positive eigenfunction of the discrete −Δ."""
    free = grid.free
    Kd, Ke, w = _free_tridiagonal(grid, free)
    mu, v, it, res = _generalized_lowest(Kd, Ke, w, tol)
    return EigenResult(mu, _embed(grid, free, v, w), it, res)


def _support_free(gs) -> np.ndarray:
    from flatsol.groundstate import _radius_of
    grid = gs.field.grid
    r = _radius_of(grid)
    h = grid.h
    inside = (r < gs.support_radius - 0.5 * h) & ~grid.dirichlet_mask
    free = np.flatnonzero(inside)
    if free.size < 3:
        raise DomainError("support too small for the linearised problem")
    return free


def linearized_potential(gs, floor: float = 1e-8) -> np.ndarray:
    """q = λβu^{β-1} − αu^{α-1} with u replaced by max(u, floor·‖u‖∞)."""
    p = gs.params
    u = np.asarray(gs.field.values)
    uf = np.maximum(u, floor * float(np.max(u)))
    return p.lam * p.beta * uf ** (p.beta - 1) - p.alpha * uf ** (p.alpha - 1)


def _linearized_once(gs, floor, tol):
    grid = gs.field.grid
    free = _support_free(gs)
    Kd, Ke, w = _free_tridiagonal(grid, free)
    q = linearized_potential(gs, floor)[free]
    mu, v, it, res = _generalized_lowest(Kd - w * q, Ke, w, tol)
    return mu, _embed(grid, free, v, w), it, res


def linearized_mu1(gs, floor: float = 1e-8, floor_rtol: float = 0.02,
                   tol: float = RESIDUAL_TOL) -> EigenResult:
    """Principal eigenvalue of −Δ − q on the support of a ground state.

    The computation is repeated with the floor divided by ten; the relative
    change is reported as ``floor_sensitivity`` and must stay below
    ``floor_rtol``.
    """
    mu, psi, it, res = _linearized_once(gs, floor, tol)
    mu2, *_ = _linearized_once(gs, floor / 10, tol)
    sens = abs(mu2 - mu) / max(abs(mu), 1e-300)
    if sens > floor_rtol:
        raise SolverError("linearised eigenvalue is sensitive to the potential floor",
                          mu_floor=mu, mu_floor_tenth=mu2, sensitivity=sens)
    return EigenResult(mu, psi, it, res, sens)


def rayleigh_at(gs, psi, floor: float = 1e-8) -> float:
    """(∫|∇ψ|² − ∫qψ²)/∫ψ² with the floored potential of ``gs``."""
    vals = np.asarray(psi.values if isinstance(psi, Field) else psi, float)
    grid = gs.field.grid
    if vals.shape != (grid.n,):
        raise DomainError("psi must live on the ground state's grid")
    den = grid.integrate(vals * vals)
    if not den > 0:
        raise DomainError("psi must be nonzero")
    T = float(np.dot(grid.stiff, np.diff(vals) ** 2))
    q = linearized_potential(gs, floor)
    nz = vals != 0
    qpsi = np.zeros_like(vals)
    qpsi[nz] = q[nz] * vals[nz] ** 2
    return (T - grid.integrate(qpsi)) / den


def hardy_ratio(mu: float, params, grid: Grid, branch: str = "r",
                tol: float = RESIDUAL_TOL) -> float:
    """Infimum of the Hardy-potential quotients r(μ) or r₁(μ).

    r(μ)  = inf (∫|∇w|² + α∫w²/d²) / (λβ∫w²/d^γ + μ∫w²),   μ ≥ 0
    r₁(μ) = inf (∫|∇w|² + α∫w²/d² + μ∫w²) / (λβ∫w²/d^γ),   μ ≤ 0
    with γ = 2(1−β)/(1−α) and d the distance to the boundary.  Both are the
    smallest eigenvalue of a generalised tridiagonal problem.
    """
    from flatsol.grid import boundary_distance_profile
    if branch not in ("r", "r1"):
        raise DomainError(f"branch must be 'r' or 'r1', got {branch!r}")
    if params.lam <= 0:
        raise DomainError("the Hardy quotients need lambda > 0")
    a, b = params.alpha, params.beta
    gamma = 2 * (1 - b) / (1 - a)
    free = grid.free
    d = boundary_distance_profile(grid).values[free]
    Kd, Ke, w = _free_tridiagonal(grid, free)
    num_d = Kd + w * a / d**2
    den = w * params.lam * b / d**gamma
    if branch == "r":
        if mu < 0:
            raise DomainError("r(mu) is defined for mu >= 0 (indefinite denominator)")
        den = den + w * mu
    else:
        if mu > 0:
            raise DomainError("r1(mu) is defined for mu <= 0")
        num_d = num_d + w * mu
    if np.any(den <= 0):
        raise DomainError("indefinite denominator")
    val, *_ = _generalized_lowest(num_d, Ke, den, tol)
    return val


def hardy_fixed_point(params, grid: Grid, mu_max: float = 1e6) -> float | None:
    """The μ > 0 with r(μ) = 1, or None when r(0) ≤ 1 (no positive root).

    r is decreasing in μ, so a sign change of r − 1 on [0, mu_max] is
    bracketed and refined with Brent's method.
    """
    from scipy.optimize import brentq
    f = lambda m: hardy_ratio(m, params, grid, "r") - 1.0  # noqa: E731
    if f(0.0) <= 0:
        return None
    hi = 1.0
    while f(hi) > 0:
        hi *= 4.0
        if hi > mu_max:
            return None
    return brentq(f, 0.0, hi, xtol=1e-12, rtol=1e-10)
