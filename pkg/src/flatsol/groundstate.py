"""Stationary solutions: radial shooting, flat profiles and variational ground states.

Two independent routes are provided.  Shooting integrates the radial ODE
from the centre and bisects on the central amplitude until the trajectory
reaches zero with zero slope, which is the flat profile on its own support
ball.  The variational route minimises the energy over the Nehari set on a
fixed grid (β < 1), or the zero-homogeneous J-functional (β = 1).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solveh_banded

from flatsol.errors import (
    DomainError,
    GeometryError,
    NoFlatSolutionError,
    PreconditionError,
    SolverError,
    UnsupportedCaseError,
)
from flatsol.fibering import (
    FiberingReport,
    fibering_roots,
    nehari_scale,
    phi_prime,
    phi_second,
)
from flatsol.grid import (
    Ball,
    Field,
    FunctionalBreakdown,
    Grid,
    Interval,
    build_grid,
    energy_gradient,
    functionals,
    laplacian_apply,
)
from flatsol.model import (
    ProblemParams,
    classify_exponents,
    flat_second_variation,
    ode_equilibrium,
    Regime,
)

DEFAULT_NODES = 2049


class ShotEvent(str, enum.Enum):
    HIT_ZERO = "HitZero"
    SLOPE_ZERO = "SlopeZero"
    RAN_OUT = "RanOut"


@dataclass
class ShotProfile:
    amplitude: float
    radius: float
    u_end: float
    du_end: float
    event: ShotEvent
    solution: object = dc_field(default=None, repr=False)
    r0: float = 0.0
    curvature0: float = 0.0

    def __call__(self, r):
        """Evaluate the trajectory at radii ``r`` (zero beyond a HitZero)."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        inner = r <= self.r0
        out[inner] = self.amplitude + 0.5 * self.curvature0 * r[inner] ** 2
        mid = (~inner) & (r <= self.radius)
        if np.any(mid):
            out[mid] = self.solution.sol(r[mid])[0]
        if self.event is ShotEvent.HIT_ZERO:
            out = np.maximum(out, 0.0)
        return out


def shoot_radial(params: ProblemParams, amplitude: float, r_max: float | None = None,
                 rtol: float = 1e-12, atol: float = 1e-14, dense: bool = False) -> ShotProfile:
    """Integrate u'' + (N-1)/r u' = u^α - λu^β outward from u(0) = amplitude.

    The singular origin is stepped over with the Taylor start
    u(r0) = a + f(a) r0²/(2N).  Integration stops at the first zero of u
    (HitZero), the first zero of u' with u' increasing through it while
    u > 0 (SlopeZero), or at ``r_max`` (RanOut).
    """
    if not amplitude > 0:
        raise DomainError(f"amplitude must be positive, got {amplitude}")
    a_, b_, lam, N = params.alpha, params.beta, params.lam, params.dimension

    def f(u):
        u = max(u, 0.0)
        return u**a_ - lam * u**b_

    if r_max is None:
        r_max = _default_rmax(params)
    c0 = f(amplitude) / N
    r0 = 1e-6 * min(1.0, r_max)
    y0 = [amplitude + 0.5 * c0 * r0 * r0, c0 * r0]

    def rhs(r, y):
        return [y[1], f(y[0]) - (N - 1) / r * y[1]]

    def hit(r, y):
        return y[0]

    hit.terminal, hit.direction = True, -1

    def slope(r, y):
        return y[1]

    slope.terminal, slope.direction = True, 1

    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", events=[hit, slope],
                    rtol=rtol, atol=atol, dense_output=dense)
    if sol.status == -1:
        raise SolverError("radial integration failed", message=sol.message,
                          amplitude=amplitude, r=float(sol.t[-1]))
    if sol.t_events[0].size:
        ev, r_end, y_end = ShotEvent.HIT_ZERO, sol.t_events[0][0], sol.y_events[0][0]
    elif sol.t_events[1].size:
        ev, r_end, y_end = ShotEvent.SLOPE_ZERO, sol.t_events[1][0], sol.y_events[1][0]
    else:
        ev, r_end, y_end = ShotEvent.RAN_OUT, sol.t[-1], sol.y[:, -1]
    return ShotProfile(float(amplitude), float(r_end), float(y_end[0]), float(y_end[1]), ev,
                       sol if dense else None, r0, c0)


def _default_rmax(params: ProblemParams) -> float:
    # generous multiple of the natural length scale u_∞^{(1-α)/2}
    lam = params.lam
    if lam <= 0:
        return 1e3
    ell = ode_equilibrium(params) ** ((1 - params.alpha) / 2)
    return 200.0 * ell * max(1.0, params.dimension / 3.0)


def flat_amplitude(params: ProblemParams, rtol: float = 1e-12, max_bisect: int = 200,
                   r_max: float | None = None) -> tuple[float, ShotProfile]:
    """Bisection on the central amplitude between SlopeZero and HitZero.

    Amplitudes just above u_∞ oscillate back (SlopeZero or RanOut); large
    amplitudes hit zero.  The flat amplitude is the common endpoint.
    """
    if params.lam <= 0:
        raise NoFlatSolutionError("no flat solution without a source term (lambda = 0)")
    u_inf = ode_equilibrium(params)
    lo = u_inf * (1 + 1e-9)
    if shoot_radial(params, lo, r_max).event is ShotEvent.HIT_ZERO:
        raise NoFlatSolutionError("shooting hits zero for every amplitude above u_inf",
                                  amplitude=lo)
    hi = 2 * u_inf
    for _ in range(60):
        if shoot_radial(params, hi, r_max).event is ShotEvent.HIT_ZERO:
            break
        lo, hi = hi, 2 * hi
    else:
        raise NoFlatSolutionError("no HitZero event in the amplitude bracket",
                                  bracket=(lo, hi))
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if shoot_radial(params, mid, r_max).event is ShotEvent.HIT_ZERO:
            hi = mid
        else:
            lo = mid
        if hi - lo < rtol * hi:
            break
    shot = shoot_radial(params, hi, r_max, dense=True)
    return hi, shot


@dataclass
class GroundState:
    field: Field
    params: ProblemParams
    support_radius: float
    flatness_defect: float
    breakdown: FunctionalBreakdown
    fibering: FiberingReport
    pohozaev_residual: float
    energy: float
    amplitude: float = math.nan
    method: str = ""
    profile: Callable | None = dc_field(default=None, repr=False)
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def nehari_residual(self) -> float:
        return phi_prime(self.breakdown, self.params, 1.0)

    @property
    def scale(self) -> float:
        return nehari_scale(self.breakdown, self.params)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "lambda": self.params.lam,
            "dimension": self.params.dimension,
            "grid": self.field.grid.describe(),
            "grid_size": self.field.grid.n,
            "amplitude": self.amplitude,
            "energy": self.energy,
            "support_radius": self.support_radius,
            "flatness_defect": self.flatness_defect,
            "pohozaev_residual": self.pohozaev_residual,
            "nehari_residual": self.nehari_residual,
            "fibering": self.fibering.to_json(),
            "diagnostics": {k: v for k, v in self.diagnostics.items()
                            if isinstance(v, (int, float, str, bool, type(None)))},
        }


def _radius_of(grid: Grid) -> np.ndarray:
    if grid.is_ball:
        return np.asarray(grid.nodes)
    c = 0.5 * (grid.domain.a + grid.domain.b)
    return np.abs(np.asarray(grid.nodes) - c)


def _domain_radius(domain) -> float:
    if isinstance(domain, Ball):
        return domain.radius
    return 0.5 * (domain.b - domain.a)


def _support_radius(field: Field, rel: float = 0.0) -> float:
    u = field.values
    r = _radius_of(field.grid)
    pos = u > rel * float(np.max(u))
    if not np.any(pos):
        return 0.0
    # first zero node outside the positive set
    rpos = float(np.max(r[pos]))
    outside = r[r > rpos]
    return float(outside.min()) if outside.size else rpos


def _assemble(field: Field, params: ProblemParams, method: str, support: float,
              defect: float, amplitude: float, profile=None, **diag) -> GroundState:
    bd = functionals(field, params)
    return GroundState(field, params, support, defect, bd, fibering_roots(bd, params),
                       bd.P, bd.E, amplitude, method, profile, diag)


def find_flat_profile(params: ProblemParams, n: int = DEFAULT_NODES, domain=None,
                      rtol: float = 1e-12) -> GroundState:
    """Flat profile by shooting, sampled on a grid.

    By default the grid is the support ball itself (Ball(N, R*), which for
    N = 1 represents the symmetric interval).  A larger ``domain`` receives
    the profile centred and extended by zero.  The flatness defect is the
    one-sided difference slope at the support edge with the grid spacing.
    """
    amp, shot = flat_amplitude(params, rtol=rtol)
    R = shot.radius
    if domain is None:
        domain = params.domain if params.domain is not None else Ball(params.dimension, R)
    if domain.dimension != params.dimension:
        raise DomainError("domain dimension does not match params")
    if _domain_radius(domain) < R * (1 - 1e-12):
        raise NoFlatSolutionError(
            f"support radius {R:.6g} exceeds the domain radius {_domain_radius(domain):.6g}",
            support_radius=R)
    grid = build_grid(domain, n)
    vals = shot(_radius_of(grid))
    vals[grid.dirichlet_mask] = 0.0
    field = Field(grid, vals)
    h = grid.h
    ue = shot(np.array([R, R - h, R - 2 * h]))
    defect = abs((3 * ue[0] - 4 * ue[1] + ue[2]) / (2 * h))
    gs = _assemble(field, params, "shooting", R, defect, amp, shot,
                   terminal_slope=shot.du_end)
    return gs


def equation_residual(gs: GroundState, inset: int = 2) -> float:
    """max |−Δu + u^α − λu^β| over interior support nodes, relative to λu_∞^β-ish scale."""
    f = gs.field
    p = gs.params
    u = f.values
    res = laplacian_apply(f, p).values + u**p.alpha - p.lam * u**p.beta
    r = _radius_of(f.grid)
    h = f.grid.h
    mask = (r < gs.support_radius - inset * h) & ~f.grid.dirichlet_mask
    return float(np.max(np.abs(res[mask]))) if np.any(mask) else 0.0


# --- variational solvers -----------------------------------------------------

def _precond_solve(grid: Grid, u: np.ndarray, alpha: float, rhs: np.ndarray) -> np.ndarray:
    # metric K + diag(w α u^{α-1}): stiffness plus the convex part of the Hessian
    diag, off = grid.stiffness_bands()
    umax = float(np.max(np.abs(u))) or 1.0
    uf = np.maximum(np.abs(u), 1e-10 * umax)
    d = diag + grid.weights * alpha * uf ** (alpha - 1)
    free = grid.free
    ab = np.zeros((2, free.size))
    ab[0, 1:] = off[free[:-1]]
    ab[1, :] = d[free]
    out = np.zeros(grid.n)
    out[free] = solveh_banded(ab, rhs[free])
    return out


def _project(v: np.ndarray, grid: Grid, params: ProblemParams, branch: str):
    """Scale v onto the Nehari set along its fibre; None when the root is lost."""
    fv = Field(grid, v)
    bd = functionals(fv, params)
    if not bd.T > 0:
        return None
    rep = fibering_roots(bd, params)
    r = rep.r_min if branch == "min" else rep.r_max
    if r is None:
        return None
    return v * r


def _descend(params: ProblemParams, grid: Grid, u: np.ndarray, branch: str, tol: float,
             max_iter: int, method: str) -> GroundState:
    a = params.alpha
    E = functionals(Field(grid, u), params).E
    step = 1.0
    gnorm = math.inf
    hist = [E]
    restarts = 0
    for it in range(1, max_iter + 1):
        fu = Field(grid, u)
        bd = functionals(fu, params)
        g = energy_gradient(fu, params)
        g[grid.dirichlet_mask] = 0.0
        d = _precond_solve(grid, u, a, g)
        gnorm = math.sqrt(max(float(np.dot(d, g)), 0.0) / nehari_scale(bd, params))
        if gnorm < tol:
            break
        accepted = False
        while step > 1e-16:
            trial = np.maximum(u - step * d, 0.0)
            trial[grid.dirichlet_mask] = 0.0
            proj = _project(trial, grid, params, branch)
            if proj is None:
                restarts += 1
            else:
                Et = functionals(Field(grid, proj), params).E
                if Et < E - 1e-4 * step * gnorm**2 * nehari_scale(bd, params) or (
                        Et < E and step < 1e-6):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            # no decrease available at working precision: stationary to round-off
            break
        u, E = proj, Et
        hist.append(E)
        step = min(1.0, step * 2.0)
    else:
        raise SolverError(f"{method} did not converge in {max_iter} iterations",
                          best=Field(grid, u), gradient_norm=gnorm)
    field = Field(grid, u)
    gs = _assemble(field, params, method, _support_radius(field, 1e-12), math.nan,
                   float(np.max(u)), None, iterations=it, gradient_norm=gnorm,
                   restarts=restarts, converged=bool(gnorm < tol))
    gs.diagnostics["energy_history"] = hist
    return gs


def _eigen_start(grid: Grid) -> np.ndarray:
    from flatsol.spectral import principal_dirichlet_eigen
    v = np.abs(np.array(principal_dirichlet_eigen(grid).eigenfield.values))
    v[grid.dirichlet_mask] = 0.0
    return v


def nehari_minimize(params: ProblemParams, grid: Grid, initial: Field | None = None,
                    tol: float = 1e-8, max_iter: int = 20000) -> GroundState:
    """Minimise E_λ over the Nehari set (β < 1).

    Each iteration takes a preconditioned gradient step on E_λ, truncates to
    the positive part and rescales onto the minimum branch r_min of the
    fibering map, so every iterate is exactly on the Nehari set.  Steps that
    lose the fibre roots are halved.  The stopping test is the dual norm of
    the energy gradient relative to √(T + A + λB).
    """
    if params.beta >= 1.0:
        raise UnsupportedCaseError("nehari_minimize is for beta < 1; use j_minimize")
    if grid.dimension != params.dimension:
        raise DomainError("grid dimension does not match params")
    v = _eigen_start(grid) if initial is None else np.abs(np.array(initial.values, float))
    v[grid.dirichlet_mask] = 0.0
    u = _project(v, grid, params, "min")
    if u is None:
        raise PreconditionError(
            "initial field has no fibering minimum root; lambda is below lambda(u) c1")
    return _descend(params, grid, u, "min", tol, max_iter, "nehari")


def j_minimize(params: ProblemParams, grid: Grid, initial: Field | None = None,
               tol: float = 1e-8, max_iter: int = 20000) -> GroundState:
    """Minimise the zero-homogeneous J_λ over {H_λ < 0} (β = 1).

    J_λ(u) = E_λ(r(u)u), and at r(u) = 1 its gradient coincides with that of
    E_λ, so the descent runs on E_λ with the iterate kept at r(u)u after each
    step; the returned field is r(u)u itself.
    """
    if params.beta != 1.0:
        raise UnsupportedCaseError("j_minimize is for beta = 1")
    if grid.dimension != params.dimension:
        raise DomainError("grid dimension does not match params")
    v = _eigen_start(grid) if initial is None else np.abs(np.array(initial.values, float))
    v[grid.dirichlet_mask] = 0.0
    bd = functionals(Field(grid, v), params)
    if not bd.H < 0:
        raise PreconditionError("initial field must satisfy H_lambda(u) < 0")
    u = _project(v, grid, params, "max")
    return _descend(params, grid, u, "max", tol, max_iter, "jmin")


# --- diagnostics ------------------------------------------------------------

@dataclass
class Lemma1Report:
    regime: str
    phi2: float
    phi2_closed_form: float
    relative_error: float
    sign_matches_regime: bool
    sign_matches_closed_form: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def verify_lemma1(gs: GroundState, flat_tol: float = 1e-3) -> Lemma1Report:
    """Sign of Φ''(1) for a flat ground state versus the exponent regime.

    ``flat_tol`` bounds the flatness defect relative to amplitude/support.
    """
    ref = gs.amplitude / gs.support_radius if gs.support_radius > 0 else math.inf
    if not (gs.flatness_defect <= flat_tol * ref):
        raise PreconditionError(f"state is not flat: defect {gs.flatness_defect:.3g}")
    p = gs.params
    lab = classify_exponents(p.alpha, p.beta, p.dimension).label
    p2 = phi_second(gs.breakdown, p, 1.0)
    closed = flat_second_variation(p, gs.breakdown.B)
    rel = abs(p2 - closed) / abs(closed) if closed != 0 else abs(p2)
    if lab is Regime.STABLE:
        ok = p2 > 0
    elif lab is Regime.UNSTABLE:
        ok = p2 < 0
    else:
        ok = abs(p2) <= 1e-3 * gs.scale
    return Lemma1Report(lab.value, p2, closed, rel, bool(ok),
                        bool(np.sign(p2) == np.sign(closed)))


def transfer_groundstate(gs: GroundState, target_lambda: float, domain=None,
                         n: int | None = None) -> GroundState:
    """Dilate a β = 1 ground state at λ = 1 to another λ.

    u_λ(x) = κ^{2/(1-α)} u_1(x/κ) with κ = 1/√λ.  The new grid is the target
    support ball unless ``domain`` is given.
    """
    p = gs.params
    if p.beta != 1.0:
        raise UnsupportedCaseError("the scaling transfer is exact only for beta = 1")
    if not math.isclose(p.lam, 1.0, rel_tol=1e-14):
        raise PreconditionError("source ground state must be at lambda = 1")
    if not target_lambda > 0:
        raise DomainError("target lambda must be positive")
    kappa = 1.0 / math.sqrt(target_lambda)
    amp_factor = kappa ** (2.0 / (1.0 - p.alpha))
    R = gs.support_radius * kappa
    newp = p.with_lambda(target_lambda)
    if domain is None:
        domain = Ball(p.dimension, R)
    if _domain_radius(domain) < R * (1 - 1e-12):
        raise GeometryError(f"transferred support {R:.6g} exceeds the domain")
    grid = build_grid(domain, n or gs.field.grid.n)
    r = _radius_of(grid)
    if gs.profile is not None:
        src = gs.profile
        vals = amp_factor * src(r / kappa)
    else:
        r_src = _radius_of(gs.field.grid)
        order = np.argsort(r_src)
        vals = amp_factor * np.interp(r / kappa, r_src[order], gs.field.values[order], right=0.0)
    vals[grid.dirichlet_mask] = 0.0
    field = Field(grid, vals)

    def profile(rr, _src=gs.profile):
        return amp_factor * _src(np.asarray(rr) / kappa)

    return _assemble(field, newp, f"transfer({gs.method})", R,
                     gs.flatness_defect * amp_factor / kappa, gs.amplitude * amp_factor,
                     profile if gs.profile is not None else None, kappa=kappa)
