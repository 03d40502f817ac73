"""Local subsolutions with the boundary growth d^{2/(1-α)}.

The profile is a cap glued to a boundary layer,

    η(r) = K1 ε^ν − K2 r^ν            for 0 ≤ r ≤ ε,
    η(r) = K3 (δε − r)^ν              for ε ≤ r ≤ δε,

with ν = 2/(1−α), multiplied by a nonincreasing time factor φ(t).  The
constants are fixed by continuity and C¹ matching at r = ε and by the
choice of K3 that makes −Δη + μη^α ≤ 0 on the annulus, where μ = ε1^{α−1}
and φ ≥ ε1.  On the cap the time factor follows the scalar comparison ODE
φ' = min(0, G(φ)), which absorbs the cap's curvature term explicitly.

The ball B_{δε}(x1) is placed so that it touches the boundary of the
domain, with x1 = a + δε on an interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import solve_ivp

from flatsol.errors import ConstructionError, DomainError
from flatsol.grid import Ball, Interval
from flatsol.model import ProblemParams


@dataclass
class SubsolutionProfile:
    params: ProblemParams
    K0: float
    K1: float
    K2: float
    K3: float
    K4: float
    epsilon: float
    delta: float
    epsilon1: float
    mu: float
    nu: float
    x1: float
    phi0: float
    case: str
    T0: float
    continuity_residual: float
    c1_residual: float
    _phi_sol: object = dc_field(default=None, repr=False)
    _eps2: float = math.nan
    _k: float = 1.0

    @property
    def outer_radius(self) -> float:
        return self.delta * self.epsilon

    # -- profile ------------------------------------------------------------
    def eta(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        e, nu = self.epsilon, self.nu
        cap = self.K1 * e**nu - self.K2 * r**nu
        layer = self.K3 * np.maximum(self.outer_radius - r, 0.0) ** nu
        return np.where(r <= e, cap, layer)

    def minus_laplacian_eta(self, r):
        """Exact −Δη (radial, dimension N) away from r = 0 of the layer."""
        r = np.abs(np.asarray(r, dtype=float))
        N, nu, e = self.params.dimension, self.nu, self.epsilon
        cap = self.K2 * nu * (nu + N - 2) * r ** (nu - 2)
        d = np.maximum(self.outer_radius - r, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            grad_term = np.where(r > 0, (N - 1) * nu * self.K3 * d ** (nu - 1) / np.where(r > 0, r, 1.0), 0.0)
        layer = -nu * (nu - 1) * self.K3 * d ** (nu - 2) + grad_term
        return np.where(r <= e, cap, layer)

    # -- schedule -----------------------------------------------------------
    def _G(self, ph):
        p = self.params
        a, b = p.alpha, p.beta
        m, M, L = self._cap_bounds()
        num = p.lam * ph**b * m**b - ph**a * M**a - ph * L
        return num / m

    def _cap_bounds(self):
        N, nu, e = self.params.dimension, self.nu, self.epsilon
        m = self.K3 * (e * (self.delta - 1)) ** nu          # η1(ε)
        M = self.K1 * e**nu                                 # η1(0)
        L = self.K2 * nu * (nu + N - 2) * e ** (nu - 2)     # max of −Δη1
        return m, M, L

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        if self.case == "b":
            return self.phi0 * (self._eps2 + np.exp(-self._k * t)) / (1 + self._eps2)
        if self._phi_sol is None:
            return np.full_like(t, self.phi0)
        return self._phi_sol.sol(np.clip(t, 0.0, self.T0))[0]

    def phi_prime(self, t):
        t = np.asarray(t, dtype=float)
        if self.case == "b":
            return -self.phi0 * self._k * np.exp(-self._k * t) / (1 + self._eps2)
        ph = self.phi(t)
        return np.minimum(0.0, self._G(ph))

    def V(self, t, r):
        return self.phi(t) * self.eta(r)

    # -- verification -------------------------------------------------------
    def residual(self, t, r):
        """V_t − ΔV + V^α − λV^β at (t, r); ≤ 0 is the subsolution inequality."""
        p = self.params
        ph, dph = self.phi(t), self.phi_prime(t)
        eta = self.eta(r)
        lap = self.minus_laplacian_eta(r)
        return dph * eta + ph * lap + (ph * eta) ** p.alpha - p.lam * (ph * eta) ** p.beta

    def verify(self, n_space: int = 2001, n_time: int = 201, horizon: float | None = None):
        """Maximum of the residual over a (t, r) verification grid."""
        T = self.T0 if math.isfinite(self.T0) else (horizon or 10.0)
        ts = np.linspace(0.0, T, n_time)
        rs = np.linspace(0.0, self.outer_radius, n_space)
        rs = np.union1d(rs, [self.epsilon])
        worst = -math.inf
        for t in ts:
            res = self.residual(t, rs)
            worst = max(worst, float(np.max(res)))
        return worst

    def initial_margin(self, domain, n: int = 4001) -> float:
        """max over the ball of V(0,x) − K0 d(x)^ν (≤ 0 means below the datum bound)."""
        xs, r, d = _ball_points(domain, self.x1, self.outer_radius, n)
        return float(np.max(self.V(0.0, r) - self.K0 * d**self.nu))

    def to_json(self) -> dict:
        keys = ["K0", "K1", "K2", "K3", "K4", "epsilon", "delta", "epsilon1", "mu", "nu",
                "x1", "phi0", "case", "T0", "continuity_residual", "c1_residual"]
        return {k: getattr(self, k) for k in keys}


def _ball_points(domain, x1, radius, n):
    if isinstance(domain, Interval):
        xs = np.linspace(x1 - radius, x1 + radius, n)
        r = np.abs(xs - x1)
        d = np.minimum(xs - domain.a, domain.b - xs)
    else:
        xs = np.linspace(x1 - radius, x1 + radius, n)  # along a diameter
        r = np.abs(xs - x1)
        d = domain.radius - np.abs(xs)
    return xs, r, d


def delta_upper_bound(alpha: float, N: int) -> float:
    nu = 2.0 / (1.0 - alpha)
    return math.inf if N == 1 else 1.0 + (nu * alpha + 1.0) / (N - 1)


def build_local_subsolution(params: ProblemParams, K0: float, epsilon: float, delta: float,
                            epsilon1: float, domain=None, horizon: float = 10.0,
                            k: float = 1.0) -> SubsolutionProfile:
    """Construct the local subsolution for data v0 ≥ K0 d^{2/(1−α)}.

    Parameters
    ----------
    params : ProblemParams
    K0 : float
        Lower growth constant of the initial datum.
    epsilon, delta : float
        Cap radius and layer ratio; the ball has radius δε.  δ must satisfy
        1 ≤ δ < 1 + (να+1)/(N−1) (no upper bound when N = 1).
    epsilon1 : float
        Lower bound for φ, in (0, 1); sets μ = ε1^{α−1}.
    domain : Interval or Ball, optional
        Used to place the ball against the boundary and check it fits.
    horizon : float
        Verification horizon when φ never reaches ε1 (case b).

    Returns
    -------
    SubsolutionProfile
    """
    a, N = params.alpha, params.dimension
    nu = 2.0 / (1.0 - a)
    if not K0 > 0:
        raise ConstructionError("K0 must be positive", "initial datum")
    if not 0 < epsilon1 < 1:
        raise ConstructionError("epsilon1 must lie in (0, 1)", "mu")
    if not epsilon > 0:
        raise ConstructionError("epsilon must be positive", "delta")
    ub = delta_upper_bound(a, N)
    if not (1.0 < delta < ub):
        # δ = 1 leaves no boundary layer and makes the matching system singular
        raise ConstructionError(f"delta={delta} violates 1 < delta < {ub}", "delta")
    if domain is None:
        domain = params.domain if params.domain is not None else Interval(0.0, math.pi)
    if domain.dimension != N:
        raise DomainError("domain dimension does not match params")
    R = delta * epsilon
    if isinstance(domain, Interval):
        x1 = domain.a + R
        if x1 + R > domain.b + 1e-14:
            raise ConstructionError("the ball B(x1, delta*epsilon) does not fit the interval",
                                    "ball inclusion")
    elif isinstance(domain, Ball):
        x1 = domain.radius - R
        if x1 - R < -domain.radius - 1e-14:
            raise ConstructionError("the ball does not fit the domain", "ball inclusion")
    else:
        raise DomainError(f"unsupported domain {domain!r}")

    mu = epsilon1 ** (a - 1.0)
    denom = (nu * a + 1.0) - (N - 1) * (delta - 1.0)
    K3 = (mu / nu / denom) ** (1.0 / (1.0 - a))
    # C¹ matching with |η1'(ε)| = |η2'(ε)|, then continuity
    K2 = K3 * (delta - 1.0) ** (nu - 1.0)
    K1 = K2 + K3 * (delta - 1.0) ** nu
    K4 = nu * ((nu - 1.0) + (N - 1) * K2) + mu * K1
    cont = abs((K1 - K2) * epsilon**nu - K3 * (epsilon * (delta - 1.0)) ** nu)
    c1 = abs(nu * K2 * epsilon ** (nu - 1) - nu * K3 * (epsilon * (delta - 1.0)) ** (nu - 1))

    # φ(0): largest value ≤ 1 keeping V(0) under K0 (δε − r)^ν ≤ K0 d^ν
    phi0 = min(1.0, K0 / K3, K0 * (delta - 1.0) ** nu / K1)
    if not phi0 > epsilon1:
        raise ConstructionError(
            f"phi(0)={phi0:.3g} does not exceed epsilon1={epsilon1}; decrease epsilon1",
            "phi(0)")

    prof = SubsolutionProfile(params, K0, K1, K2, K3, K4, epsilon, delta, epsilon1, mu, nu,
                              x1, phi0, "a", math.inf, cont, c1, _k=k)
    grid_phi = np.linspace(epsilon1, phi0, 4001)
    if np.all(prof._G(grid_phi) >= 0.0):
        prof.case = "b"
        prof._eps2 = epsilon1 / (phi0 - epsilon1)
        prof.T0 = math.inf
        return prof

    def rhs(t, y):
        return [min(0.0, float(prof._G(y[0])))]

    def floor(t, y):
        return y[0] - epsilon1

    floor.terminal, floor.direction = True, -1
    sol = solve_ivp(rhs, (0.0, horizon), [phi0], events=floor, dense_output=True,
                    rtol=1e-12, atol=1e-14)
    prof._phi_sol = sol
    prof.T0 = float(sol.t_events[0][0]) if sol.t_events[0].size else float(horizon)
    return prof
