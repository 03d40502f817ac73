"""Fibering maps Φ_u(r) = E_λ(ru) and the quantities built on them.

All evaluations work in (T, A, B) space: T(ru) = r²T, A(ru) = r^{1+α}A,
B(ru) = r^{1+β}B, so nothing here rescales a field.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded

from flatsol.errors import DomainError, SolverError, UnsupportedCaseError
from flatsol.grid import Field, FunctionalBreakdown, Grid, breakdown_from_parts, functionals
from flatsol.model import ProblemParams, fibering_constants

BISECT_RTOL = 1e-13
DEGENERATE_RTOL = 1e-12


def phi(bd: FunctionalBreakdown, params: ProblemParams, r: float) -> float:
    a, b, lam = params.alpha, params.beta, params.lam
    return r * r * bd.T / 2 + r ** (1 + a) * bd.A / (1 + a) - lam * r ** (1 + b) * bd.B / (1 + b)


def phi_prime(bd: FunctionalBreakdown, params: ProblemParams, r: float = 1.0) -> float:
    a, b, lam = params.alpha, params.beta, params.lam
    return r * bd.T + r**a * bd.A - lam * r**b * bd.B


def phi_second(bd: FunctionalBreakdown, params: ProblemParams, r: float = 1.0) -> float:
    a, b, lam = params.alpha, params.beta, params.lam
    return bd.T + a * r ** (a - 1) * bd.A - lam * b * r ** (b - 1) * bd.B


def nehari_residual(bd: FunctionalBreakdown, params: ProblemParams) -> float:
    """Φ'(1) = T + A - λB."""
    return phi_prime(bd, params, 1.0)


def nehari_scale(bd: FunctionalBreakdown, params: ProblemParams) -> float:
    return bd.T + bd.A + params.lam * bd.B


def scaled_breakdown(bd: FunctionalBreakdown, params: ProblemParams, s: float) -> FunctionalBreakdown:
    """Breakdown of s·u from that of u."""
    s = abs(s)
    return breakdown_from_parts(
        s * s * bd.T,
        s ** (1 + params.alpha) * bd.A,
        s ** (1 + params.beta) * bd.B,
        s * s * bd.L2sq,
        params,
    )


@dataclass
class FiberingReport:
    root_count: int
    r_max: float | None
    r_min: float | None
    phi2_at_rmax: float | None
    phi2_at_rmin: float | None
    degenerate: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def _bisect_log(g, s_lo, s_hi):
    """Root of g(e^s) on [s_lo, s_hi]; a width of BISECT_RTOL in s is a relative width in r."""
    glo = g(math.exp(s_lo))
    for _ in range(400):
        mid = 0.5 * (s_lo + s_hi)
        gm = g(math.exp(mid))
        if gm == 0.0:
            return math.exp(mid)
        if (gm > 0) == (glo > 0):
            s_lo, glo = mid, gm
        else:
            s_hi = mid
        if s_hi - s_lo <= BISECT_RTOL:
            break
    return math.exp(0.5 * (s_lo + s_hi))


def _outer_log(g, s0, step):
    # walk away from r* until g > 0, staying inside the normal float range
    s = s0 + step
    while True:
        if abs(s) > _LOG_RANGE:
            raise DomainError("a fibering root lies outside the floating-point range")
        if g(math.exp(s)) > 0:
            return s
        s += step


_LOG_RANGE = 700.0


def fibering_roots(bd: FunctionalBreakdown, params: ProblemParams) -> FiberingReport:
    """Nonzero roots of Φ'_u(r) = 0.

    β < 1: g(r) = Φ'(r)/r = T + r^{α-1}A - λr^{β-1}B is +∞ at 0, tends to
    T > 0 at ∞ and has a single critical point r* (closed form), so there are
    zero, one (degenerate) or two roots, found by bisection on each side.
    β = 1: one root (A/(-H))^{1/(1-α)} exactly when H_λ < 0.
    """
    if not bd.T > 0:
        raise DomainError("fibering roots need T(u) > 0")
    a, b, lam = params.alpha, params.beta, params.lam
    if b == 1.0:
        H = bd.T - lam * bd.B
        if H >= 0:
            return FiberingReport(0, None, None, None, None)
        r = (bd.A / -H) ** (1 / (1 - a))
        return FiberingReport(1, r, None, phi_second(bd, params, r), None)
    if lam == 0 or bd.B == 0:
        return FiberingReport(0, None, None, None, None)

    def g(r):
        return bd.T + r ** (a - 1) * bd.A - lam * r ** (b - 1) * bd.B

    # r* in logs: the exponent 1/(β-α) overflows when β is close to α
    log_r = math.log((1 - a) * bd.A / (lam * (1 - b) * bd.B)) / (b - a)
    absorb = math.exp((a - 1) * log_r) * bd.A if (a - 1) * log_r < 700 else math.inf
    # at r*, λ r*^{β-1} B = (1-α)/(1-β) r*^{α-1} A
    g_star = bd.T - absorb * (b - a) / (1 - b)
    size = bd.T + absorb * (1 + (1 - a) / (1 - b))
    if abs(g_star) <= DEGENERATE_RTOL * size:
        r_star = math.exp(log_r)
        p2 = phi_second(bd, params, r_star)
        return FiberingReport(1, r_star, r_star, p2, p2, degenerate=True)
    if g_star > 0:
        return FiberingReport(0, None, None, None, None)
    s_lo = _outer_log(g, log_r, -math.log(2.0))
    s_hi = _outer_log(g, log_r, math.log(2.0))
    r1 = _bisect_log(g, s_lo, log_r)
    r2 = _bisect_log(g, log_r, s_hi)
    return FiberingReport(2, r1, r2, phi_second(bd, params, r1), phi_second(bd, params, r2))


def lambda_of_u(bd: FunctionalBreakdown, alpha: float, beta: float) -> float:
    """Scale-invariant ratio A^{(1-β)/(1-α)} T^{(β-α)/(1-α)} / B."""
    if not (bd.T > 0 and bd.A > 0 and bd.B > 0):
        raise DomainError("lambda(u) needs T, A, B > 0")
    p = (1 - beta) / (1 - alpha)
    q = (beta - alpha) / (1 - alpha)
    return bd.A**p * bd.T**q / bd.B


def lambda0_of_u(bd, alpha, beta):
    return fibering_constants(alpha, beta)[0] * lambda_of_u(bd, alpha, beta)


def lambda1_of_u(bd, alpha, beta):
    return fibering_constants(alpha, beta)[1] * lambda_of_u(bd, alpha, beta)


def j_functional(bd: FunctionalBreakdown, params: ProblemParams) -> float:
    """E_λ at the fibering root, β = 1 (zero-homogeneous)."""
    if params.beta != 1.0:
        raise UnsupportedCaseError("J_lambda is defined for beta = 1")
    a = params.alpha
    H = bd.T - params.lam * bd.B
    if H >= 0:
        raise DomainError("J_lambda needs H_lambda(u) < 0")
    if not bd.A > 0:
        raise DomainError("J_lambda needs A(u) > 0")
    return (1 - a) / (2 * (1 + a)) * bd.A ** (2 / (1 - a)) / (-H) ** ((1 + a) / (1 - a))


def potential_well_membership(bd: FunctionalBreakdown, params: ProblemParams, E_hat: float) -> bool:
    """Exterior potential well: E < Ê and Φ'(1) < 0 (β = 1)."""
    if params.beta != 1.0:
        raise UnsupportedCaseError("the exterior potential well is used for beta = 1")
    return bool(bd.E < E_hat and phi_prime(bd, params, 1.0) < 0)


# --- Sobolev-gradient machinery shared with the ground-state solvers -------

class SobolevSolver:
    """Riesz map of the H¹₀ inner product u^T K v on the free nodes of a grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        diag, off = grid.stiffness_bands()
        free = grid.free
        d = diag[free]
        o = off[free[:-1]]  # free nodes are contiguous
        ab = np.zeros((2, free.size))
        ab[0, 1:] = o
        ab[1, :] = d
        self._cb = cholesky_banded(ab)
        self.free = free

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n)
        out[self.free] = cho_solve_banded((self._cb, False), rhs[self.free])
        return out


def _log_lambda_gradient(u, grid, alpha, beta):
    # nodal gradient of log λ(u) for u >= 0
    w = grid.weights
    T = float(np.dot(grid.stiff, np.diff(u) ** 2))
    A = float(np.dot(w, u ** (1 + alpha)))
    B = float(np.dot(w, u ** (1 + beta)))
    p = (1 - beta) / (1 - alpha)
    q = (beta - alpha) / (1 - alpha)
    val = p * math.log(A) + q * math.log(T) - math.log(B)
    grad = (p * (1 + alpha) / A) * w * u**alpha + (q * 2 / T) * grid.stiffness_apply(u) \
        - ((1 + beta) / B) * w * u**beta
    return val, grad


@dataclass
class LambdaEstimate:
    Lambda0: float
    Lambda1: float
    lambda_min: float
    argmin: Field
    iterations: int
    history: list


def estimate_Lambda(params: ProblemParams, grid: Grid, initial: Field | None = None,
                    max_iter: int = 5000, tol: float = 1e-10, step0: float = 1.0) -> LambdaEstimate:
    """Upper estimates of Λ0 = c0 inf λ(u) and Λ1 = c1 inf λ(u).

    Normalised Sobolev-gradient descent on log λ(u) with backtracking; a step
    is accepted only if it decreases λ, so the returned values never exceed
    the value at the initial field (the principal eigenfunction by default).
    """
    if params.beta >= 1.0:
        raise UnsupportedCaseError("Lambda estimates are for beta < 1")
    a, b = params.alpha, params.beta
    c0, c1 = fibering_constants(a, b)
    sob = SobolevSolver(grid)
    if initial is None:
        from flatsol.spectral import principal_dirichlet_eigen
        initial = principal_dirichlet_eigen(grid).eigenfield
    u = np.abs(np.array(initial.values, dtype=float))
    u[grid.dirichlet_mask] = 0.0
    u /= math.sqrt(float(np.dot(grid.stiff, np.diff(u) ** 2)))
    val, grad = _log_lambda_gradient(u, grid, a, b)
    history = [math.exp(val)]
    step = step0
    it = 0
    for it in range(1, max_iter + 1):
        d = sob.solve(grad)
        gnorm = math.sqrt(max(float(np.dot(d, grad)), 0.0))
        if gnorm < tol:
            break
        accepted = False
        while step > 1e-14:
            trial = np.maximum(u - step * d, 0.0)
            tn = float(np.dot(grid.stiff, np.diff(trial) ** 2))
            if tn > 0:
                trial /= math.sqrt(tn)
                tval, tgrad = _log_lambda_gradient(trial, grid, a, b)
                if tval < val:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        rel = val - tval
        u, val, grad = trial, tval, tgrad
        history.append(math.exp(val))
        step = min(step * 2.0, 1e3)
        if rel < tol * 1e-2:
            break
    else:
        raise SolverError("Lambda estimate did not converge", best=Field(grid, u),
                          lambda_min=math.exp(val))
    lam_min = math.exp(val)
    return LambdaEstimate(c0 * lam_min, c1 * lam_min, lam_min, Field(grid, u), it, history)


def fibering_report_for(field: Field, params: ProblemParams) -> FiberingReport:
    return fibering_roots(functionals(field, params), params)
