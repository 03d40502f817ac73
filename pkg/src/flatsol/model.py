"""Scalar algebra of the problem  -Δu + u^α = λ u^β,  0 < α < β ≤ 1.

Everything here is closed form or a scalar ODE: exponent regimes, the
fibering constants, equilibria, scaling laws and the spatially homogeneous
flow  v' = λ v^β - v^α.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numba
import numpy as np

from flatsol.errors import ConfigError, DomainError, UnsupportedCaseError

ONCURVE_RTOL = 1e-12


@dataclass(frozen=True)
class ExponentPair:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < self.beta <= 1.0):
            raise DomainError(
                f"need 0 < alpha < beta <= 1, got alpha={self.alpha}, beta={self.beta}"
            )

    @property
    def linear(self) -> bool:
        return self.beta == 1.0

    @property
    def nu(self) -> float:
        """Boundary-layer exponent 2/(1-α) of flat profiles."""
        return 2.0 / (1.0 - self.alpha)


@dataclass(frozen=True)
class ProblemParams:
    """Exponents, coefficient λ, dimension N and (optionally) the domain.

    ``lam = 0`` is accepted because the extinction experiments need the pure
    absorption problem; every operation that divides by λ checks for it.
    """

    exponents: ExponentPair
    lam: float
    dimension: int = 1
    domain: object = None

    def __post_init__(self):
        if not self.lam >= 0.0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DomainError(f"dimension must be an integer >= 1, got {self.dimension}")

    @property
    def alpha(self) -> float:
        return self.exponents.alpha

    @property
    def beta(self) -> float:
        return self.exponents.beta

    def with_lambda(self, lam: float) -> "ProblemParams":
        return replace(self, lam=lam)

    def with_domain(self, domain) -> "ProblemParams":
        return replace(self, domain=domain)


def make_params(alpha, beta, lam, dimension=1, domain=None) -> ProblemParams:
    return ProblemParams(ExponentPair(alpha, beta), lam, dimension, domain)


class Regime(str, enum.Enum):
    ON_CURVE = "OnCurve"
    STABLE = "StableSet"
    UNSTABLE = "UnstableSet"


class RegimeLabel(NamedTuple):
    label: Regime
    discriminant: float


def discriminant(alpha: float, beta: float, N: int) -> float:
    """Δ = 2(1+α)(1+β) - N(1-α)(1-β); negative on the stable side."""
    return 2.0 * (1.0 + alpha) * (1.0 + beta) - N * (1.0 - alpha) * (1.0 - beta)


def classify_exponents(alpha: float, beta: float, N: int) -> RegimeLabel:
    ExponentPair(alpha, beta)
    if N < 1:
        raise DomainError(f"dimension must be >= 1, got {N}")
    lhs = 2.0 * (1.0 + alpha) * (1.0 + beta)
    rhs = N * (1.0 - alpha) * (1.0 - beta)
    delta = lhs - rhs
    if abs(delta) < ONCURVE_RTOL * (1.0 + abs(lhs) + abs(rhs)):
        return RegimeLabel(Regime.ON_CURVE, delta)
    if delta < 0:
        return RegimeLabel(Regime.STABLE, delta)
    return RegimeLabel(Regime.UNSTABLE, delta)


def critical_beta(alpha: float, N: int) -> float | None:
    """β on the critical curve for given α, or None when it leaves (α, 1)."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if N < 3:
        return None
    a = N * (1.0 - alpha)
    b = 2.0 * (1.0 + alpha)
    beta = (a - b) / (a + b)
    if alpha < beta < 1.0:
        return beta
    return None


def ode_equilibrium(params: ProblemParams) -> float:
    """Nonzero equilibrium u_∞ = λ^{-1/(β-α)} of the homogeneous flow."""
    if params.lam <= 0.0:
        raise DomainError("the nonzero equilibrium needs lambda > 0")
    try:
        return params.lam ** (-1.0 / (params.beta - params.alpha))
    except OverflowError:  # tiny λ with β close to α
        return math.inf


def fibering_constants(alpha: float, beta: float) -> tuple[float, float]:
    """Return (c0, c1) with λ0(u) = c0 λ(u) and λ1(u) = c1 λ(u)."""
    ExponentPair(alpha, beta)
    if beta == 1.0:
        raise UnsupportedCaseError("c0, c1 are defined for beta < 1 only")
    p = (beta - alpha) / (1.0 - alpha)
    c0 = ((1 - alpha) * (1 + beta) / ((1 - beta) * (1 + alpha))) * (
        (1 + alpha) * (1 - beta) / (2 * (beta - alpha))
    ) ** p
    c1 = ((1 - alpha) / (1 - beta)) * ((1 - beta) / (beta - alpha)) ** p
    return c0, c1


def pohozaev_determinant(alpha: float, beta: float, N: int) -> float:
    ExponentPair(alpha, beta)
    return (beta - alpha) * discriminant(alpha, beta, N) / (
        2.0 * N * (1.0 + alpha) * (1.0 + beta)
    )


def flat_second_variation(params: ProblemParams, B_value: float) -> float:
    """Closed-form Φ''(1) of a flat solution with B(u) = B_value.

    Flat solutions satisfy both the Nehari identity and P_λ(u) = 0, which
    pins T and A in terms of S = λB; the remaining combination is
    T + αA - βS.
    """
    a, b, N = params.alpha, params.beta, params.dimension
    S = params.lam * B_value
    num = S * (b - a) * (N * (1 - a) * (1 - b) - 2 * (1 + a) * (1 + b))
    den = (1 + b) * (N * (1 - a) + 2 * (1 + a))
    return num / den


def lambda_c(alpha: float, N: int, lambda1: float) -> float:
    """Threshold (β = 1) below which no C¹ flat solution exists."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return (1.0 + 2.0 * (1.0 + alpha) / (N * (1.0 - alpha))) * lambda1


def scaling_transfer(params: ProblemParams, kappa: float):
    """Dilation map between solutions at λκ² and at λ.

    If ``w`` solves the problem with coefficient ``λκ²`` then
    ``κ^{2/(1-α)} w(x/κ)`` solves it with coefficient ``λ``.  Returns
    ``(params at λκ², amplitude factor κ^{2/(1-α)}, support factor κ)``.
    Exact for β = 1.
    """
    if kappa <= 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    amp = kappa ** (2.0 / (1.0 - params.alpha))
    return params.with_lambda(params.lam * kappa**2), amp, kappa


class ODETrajectory(NamedTuple):
    t: np.ndarray
    v: np.ndarray
    extinction_time: float | None


@numba.njit(cache=True)
def _absorb(v, tau, alpha):
    # exact flow of v' = -v^α over tau; returns (value, time-to-zero or -1)
    if v <= 0.0:
        return 0.0, 0.0
    s = v ** (1.0 - alpha)
    t0 = s / (1.0 - alpha)
    if t0 <= tau:
        return 0.0, t0
    return (s - (1.0 - alpha) * tau) ** (1.0 / (1.0 - alpha)), -1.0


@numba.njit(cache=True)
def _source(v, tau, lam, beta):
    # minimal solution of v' = λ v^β (zero stays zero)
    if v <= 0.0 or lam == 0.0:
        return v
    if beta == 1.0:
        return v * math.exp(lam * tau)
    return (v ** (1.0 - beta) + (1.0 - beta) * lam * tau) ** (1.0 / (1.0 - beta))


@numba.njit(cache=True)
def _rhs(v, lam, alpha, beta):
    if v <= 0.0:
        return 0.0
    return lam * v**beta - v**alpha


@numba.njit(cache=True)
def _ode_loop(v0, lam, alpha, beta, dt, nsteps, stride, cap):
    nrec = nsteps // stride + 2
    ts = np.empty(nrec)
    vs = np.empty(nrec)
    ts[0] = 0.0
    vs[0] = v0
    k = 1
    v = v0
    t_ext = 0.0 if v0 <= 0.0 else -1.0
    thr = ((1.0 - alpha) * 4.0 * dt) ** (1.0 / (1.0 - alpha))
    last = 0
    for i in range(nsteps):
        t = i * dt
        if v > 0.0:
            f0 = _rhs(v, lam, alpha, beta)
            split = f0 < 0.0 and v < thr
            if not split:
                vm = v + 0.5 * dt * f0
                if vm <= 0.0:
                    split = True
                else:
                    vn = v + dt * _rhs(vm, lam, alpha, beta)
                    if vn <= 0.0 or (f0 < 0.0 and vn < 0.5 * thr):
                        split = True
                    else:
                        v = vn
            if split:
                # absorption/source/absorption with exact sub-flows
                w, hit = _absorb(v, 0.5 * dt, alpha)
                if hit >= 0.0:
                    v = 0.0
                    t_ext = t + hit
                else:
                    w = _source(w, dt, lam, beta)
                    w, hit = _absorb(w, 0.5 * dt, alpha)
                    if hit >= 0.0:
                        v = 0.0
                        t_ext = t + 0.5 * dt + hit
                    else:
                        v = w
        last = i + 1
        if (i + 1) % stride == 0:
            ts[k] = (i + 1) * dt
            vs[k] = v
            k += 1
        if v > cap:
            break
    if last % stride != 0:
        ts[k] = last * dt
        vs[k] = v
        k += 1
    return ts[:k], vs[:k], t_ext


def ode_integrate(params: ProblemParams, v0: float, t_end: float, dt: float,
                  record_every: int = 1, cap: float = math.inf) -> ODETrajectory:
    """Integrate v' = λv^β - v^α from v0 up to t_end (or until v exceeds cap).

    Explicit midpoint away from zero.  Close to zero, where the absorption is
    non-Lipschitz, a step is taken with the exact absorption and source flows
    in symmetric order, so the extinction instant is resolved analytically
    and zero is kept absorbing.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if v0 < 0:
        raise DomainError(f"v0 must be nonnegative, got {v0}")
    if record_every < 1:
        raise ConfigError("record_every must be >= 1")
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    ts, vs, t_ext = _ode_loop(float(v0), float(params.lam), params.alpha,
                              params.beta, float(dt), nsteps, int(record_every),
                              float(cap))
    return ODETrajectory(ts, vs, None if t_ext < 0 else float(t_ext))
