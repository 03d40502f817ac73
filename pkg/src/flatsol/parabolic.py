"""Time integration of  v_t − Δv + v^α = λv^β  with homogeneous Dirichlet data.

Scheme
------
Strang splitting per step: half a reaction step, one implicit-Euler
diffusion step with the lumped mass, half a reaction step.  The diffusion
matrix W + dt·K is a symmetric M-matrix, factored once and solved with the
Thomas algorithm, so it preserves nonnegativity and order.  The reaction
v' = λv^β − v^α is advanced node by node with the explicit midpoint rule
away from zero; close to zero, where v^α is not Lipschitz, the substep
composes the exact absorption flow (v^{1−α} − (1−α)τ)₊^{1/(1−α)} with the
exact minimal source flow, so extinction happens at the right instant and
zero stays absorbing.

The whole time loop runs in one compiled kernel which also evaluates the
discrete energy after every step and aborts on a dissipation violation.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numba
import numpy as np

from flatsol.errors import ConfigError, DomainError, PreconditionError, SchemeFailure, \
    UnsupportedCaseError
from flatsol.grid import Field, Grid, boundary_distance_profile, h01_norm
from flatsol.model import ProblemParams, _absorb, _source

TRAJECTORY_COLUMNS = ("t", "l2", "linf", "h01", "energy", "nehari_residual",
                      "nondeg_const", "dist_to_ref")


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-4
    t_end: float = 1.0
    stride: int = 100
    extinction_tol: float = 1e-12
    extinction_count: int = 10
    reaction_substeps: int = 1
    dissipation_rtol: float = 1e-8
    check_dissipation: bool = True
    cap: float = math.inf
    store_snapshots: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ConfigError("t_end must be at least dt")
        if self.stride < 1 or self.reaction_substeps < 1 or self.extinction_count < 1:
            raise ConfigError("stride, reaction_substeps and extinction_count must be >= 1")
        if not (self.extinction_tol > 0 and self.dissipation_rtol > 0 and self.cap > 0):
            raise ConfigError("tolerances and cap must be positive")

    @property
    def nsteps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))


@dataclass
class Trajectory:
    grid: Grid
    params: ProblemParams
    config: EvolutionConfig
    records: np.ndarray          # rows aligned with TRAJECTORY_COLUMNS
    snapshots: np.ndarray | None = dc_field(default=None, repr=False)
    extinction_step_time: float | None = None
    stop_reason: str = "horizon"
    max_energy_increase: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return self.records[:, TRAJECTORY_COLUMNS.index(name)]

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def __getattr__(self, name):
        if name in TRAJECTORY_COLUMNS:
            return self.column(name)
        raise AttributeError(name)

    def final_field(self) -> Field | None:
        if self.snapshots is None:
            return None
        return Field(self.grid, self.snapshots[-1])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in self.records:
                w.writerow([f"{x:.17g}" for x in row])
        return path

    def write_snapshots(self, directory, prefix: str = "snapshot") -> list[Path]:
        from flatsol.grid import write_field_csv
        if self.snapshots is None:
            return []
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for k, vals in enumerate(self.snapshots):
            out.append(write_field_csv(Field(self.grid, vals), directory / f"{prefix}_{k:05d}.csv"))
        return out


class VerdictKind(str, enum.Enum):
    STABLE = "Stable"
    DEPARTED = "Departed"
    EXTINCT = "Extinct"
    GREW = "GrewUnbounded"
    UNDECIDED = "Undecided"


@dataclass
class StabilityVerdict:
    kind: VerdictKind
    time: float | None
    trajectory: Trajectory = dc_field(repr=False)
    epsilon: float | None = None
    delta: float | None = None
    max_distance: float | None = None
    notes: str = ""

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "time": self.time, "epsilon": self.epsilon,
                "delta": self.delta, "max_distance": self.max_distance, "notes": self.notes,
                "stop_reason": self.trajectory.stop_reason}


# --- compiled kernel ------------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _rate(v, lam, alpha, beta):
    # λv^β − v^α with one logarithm shared by both powers
    lv = math.log(v)
    src = v if beta == 1.0 else math.exp(beta * lv)
    return lam * src - math.exp(alpha * lv)


@numba.njit(cache=True)
def _react_node(v, tau, lam, alpha, beta, m, thr):
    h = tau / m
    for _ in range(m):
        if v <= 0.0:
            return 0.0
        split = v < thr
        if not split:
            vm = v + 0.5 * h * _rate(v, lam, alpha, beta)
            if vm <= 0.0:
                split = True
            else:
                vn = v + h * _rate(vm, lam, alpha, beta)
                if vn < 0.5 * thr:
                    split = True
                else:
                    v = vn
        if split:
            w, hit = _absorb(v, 0.5 * h, alpha)
            if hit >= 0.0:
                return 0.0
            w = _source(w, h, lam, beta)
            w, hit = _absorb(w, 0.5 * h, alpha)
            if hit >= 0.0:
                return 0.0
            v = w
    return v


@numba.njit(cache=True)
def _react(v, tau, lam, alpha, beta, m, thr, fixed):
    for i in range(v.size):
        if fixed[i]:
            v[i] = 0.0
        else:
            v[i] = _react_node(v[i], tau, lam, alpha, beta, m, thr)


@numba.njit(cache=True)
def _thomas_factor(a, b):
    # symmetric tridiagonal: diagonal a, off-diagonal b; returns modified pivots
    n = a.size
    cp = np.empty(n - 1)
    den = np.empty(n)
    den[0] = a[0]
    for i in range(n - 1):
        cp[i] = b[i] / den[i]
        den[i + 1] = a[i + 1] - b[i] * cp[i]
    return cp, den


@numba.njit(cache=True)
def _thomas_solve(cp, den, b, rhs, out):
    n = rhs.size
    out[0] = rhs[0] / den[0]
    for i in range(1, n):
        out[i] = (rhs[i] - b[i - 1] * out[i - 1]) / den[i]
    for i in range(n - 2, -1, -1):
        out[i] -= cp[i] * out[i + 1]
    for i in range(n):
        if out[i] < 0.0:
            out[i] = 0.0


@numba.njit(cache=True)
def _diffusion_matrix(w, stiff, dt, fixed):
    n = w.size
    a = w.copy()
    b = np.zeros(n - 1)
    for i in range(n - 1):
        a[i] += dt * stiff[i]
        a[i + 1] += dt * stiff[i]
        b[i] = -dt * stiff[i]
    for i in range(n):
        if fixed[i]:
            a[i] = 1.0
            if i > 0:
                b[i - 1] = 0.0
            if i < n - 1:
                b[i] = 0.0
    return a, b


@numba.njit(cache=True)
def _one_step(v, rhs, w, cp, den, b, dt, lam, alpha, beta, m, thr, fixed):
    _react(v, 0.5 * dt, lam, alpha, beta, m, thr, fixed)
    for i in range(v.size):
        rhs[i] = 0.0 if fixed[i] else w[i] * v[i]
    _thomas_solve(cp, den, b, rhs, v)
    _react(v, 0.5 * dt, lam, alpha, beta, m, thr, fixed)


@numba.njit(cache=True)
def _measures(v, w, stiff, lam, alpha, beta, dnu, ref, has_ref):
    T = 0.0
    Tref = 0.0
    for i in range(stiff.size):
        d = v[i + 1] - v[i]
        T += stiff[i] * d * d
        if has_ref:
            e = d - (ref[i + 1] - ref[i])
            Tref += stiff[i] * e * e
    A = 0.0
    B = 0.0
    L2 = 0.0
    linf = 0.0
    nd = np.inf
    for i in range(v.size):
        x = v[i]
        if x > 0.0:
            lx = math.log(x)
            A += w[i] * x * math.exp(alpha * lx)
            B += w[i] * x * (x if beta == 1.0 else math.exp(beta * lx))
            L2 += w[i] * x * x
            if x > linf:
                linf = x
        if dnu[i] > 0.0:
            q = x / dnu[i]
            if q < nd:
                nd = q
    E = 0.5 * T + A / (1.0 + alpha) - lam * B / (1.0 + beta)
    return T, A, B, L2, linf, E, nd, math.sqrt(Tref)


@numba.njit(cache=True)
def _evolve_kernel(v0, w, stiff, fixed, lam, alpha, beta, dt, nsteps, stride, m,
                   ext_tol, ext_count, cap, slack, check, dnu, ref, has_ref,
                   store, depart_eps):
    n = v0.size
    nrec = nsteps // stride + 2
    rec = np.empty((nrec, 8))
    snaps = np.empty((nrec if store else 1, n))
    v = v0.copy()
    rhs = np.empty(n)
    a, b = _diffusion_matrix(w, stiff, dt, fixed)
    cp, den = _thomas_factor(a, b)
    thr = ((1.0 - alpha) * 4.0 * dt / m) ** (1.0 / (1.0 - alpha))
    T, A, B, L2, linf, E, nd, dist = _measures(v, w, stiff, lam, alpha, beta, dnu, ref, has_ref)
    rec[0, 0] = 0.0
    rec[0, 1] = math.sqrt(L2)
    rec[0, 2] = linf
    rec[0, 3] = math.sqrt(T)
    rec[0, 4] = E
    rec[0, 5] = T + A - lam * B
    rec[0, 6] = nd
    rec[0, 7] = dist
    if store:
        snaps[0] = v
    k = 1
    status = 0          # 0 horizon, 1 extinct, 2 cap, 3 dissipation, 4 departed
    fail_step = -1
    worst = -np.inf
    below = 1 if linf < ext_tol else 0
    ext_step = 0 if linf < ext_tol else -1
    E_old = E
    last = 0
    for s in range(nsteps):
        _one_step(v, rhs, w, cp, den, b, dt, lam, alpha, beta, m, thr, fixed)
        last = s + 1
        T, A, B, L2, linf, E, nd, dist = _measures(v, w, stiff, lam, alpha, beta, dnu, ref,
                                                   has_ref)
        dE = E - E_old
        if dE > worst:
            worst = dE
        E_old = E
        if check and dE > slack:
            status = 3
            fail_step = s + 1
        if linf < ext_tol:
            if ext_step < 0:
                ext_step = s + 1
        else:
            ext_step = -1
        snap_now = (s + 1) % stride == 0 or status != 0 or linf > cap or dist > depart_eps
        if snap_now:
            rec[k, 0] = (s + 1) * dt
            rec[k, 1] = math.sqrt(L2)
            rec[k, 2] = linf
            rec[k, 3] = math.sqrt(T)
            rec[k, 4] = E
            rec[k, 5] = T + A - lam * B
            rec[k, 6] = nd
            rec[k, 7] = dist
            if store:
                snaps[k] = v
            k += 1
            if linf < ext_tol:
                below += 1
            else:
                below = 0
        if status != 0:
            break
        if linf > cap:
            status = 2
            break
        if dist > depart_eps:
            status = 4
            break
        if below >= ext_count:
            status = 1
            break
    if last % stride != 0 and status == 0:
        rec[k, 0] = last * dt
        rec[k, 1] = math.sqrt(L2)
        rec[k, 2] = linf
        rec[k, 3] = math.sqrt(T)
        rec[k, 4] = E
        rec[k, 5] = T + A - lam * B
        rec[k, 6] = nd
        rec[k, 7] = dist
        if store:
            snaps[k] = v
        k += 1
    return rec[:k], snaps[:k] if store else snaps[:0], status, fail_step, worst, ext_step


_STOP = {0: "horizon", 1: "extinct", 2: "cap", 3: "dissipation", 4: "departed"}


def _prepare(v0: Field, params: ProblemParams):
    grid = v0.grid
    if grid.dimension != params.dimension:
        raise DomainError("grid dimension does not match params")
    vals = np.array(v0.values, dtype=float)
    if np.any(vals < 0):
        raise PreconditionError("initial datum must be nonnegative")
    if not np.all(np.isfinite(vals)):
        raise PreconditionError("initial datum must be bounded")
    vals[grid.dirichlet_mask] = 0.0
    return grid, vals


def step(field: Field, params: ProblemParams, dt: float, substeps: int = 1) -> Field:
    """One Strang step (reaction/2, implicit diffusion, reaction/2)."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    grid, v = _prepare(field, params)
    fixed = np.ascontiguousarray(grid.dirichlet_mask)
    a, b = _diffusion_matrix(np.asarray(grid.weights), np.asarray(grid.stiff), dt, fixed)
    if np.any(a[1:-1] < np.abs(b[:-1]) + np.abs(b[1:])):
        raise SchemeFailure("diffusion matrix lost diagonal dominance")
    cp, den = _thomas_factor(a, b)
    thr = ((1.0 - params.alpha) * 4.0 * dt / substeps) ** (1.0 / (1.0 - params.alpha))
    _one_step(v, np.empty_like(v), np.asarray(grid.weights), cp, den, b, dt, params.lam,
              params.alpha, params.beta, substeps, thr, fixed)
    return Field(grid, v)


def evolve(v0: Field, params: ProblemParams, config: EvolutionConfig,
           reference: Field | None = None, depart_eps: float = math.inf) -> Trajectory:
    """Run the scheme from ``v0`` up to ``config.t_end``.

    Stops early on sustained extinction, when ‖v‖∞ exceeds ``config.cap``,
    or (if ``depart_eps`` is finite) when the H¹₀ distance to ``reference``
    exceeds it.  Raises SchemeFailure if one step increases the energy by
    more than ``dissipation_rtol·(1 + |E(0)|)``.
    """
    grid, vals = _prepare(v0, params)
    has_ref = reference is not None
    ref = np.asarray(reference.values if has_ref else np.zeros(grid.n), dtype=float)
    nu = 2.0 / (1.0 - params.alpha)
    d = boundary_distance_profile(grid).values
    dnu = np.where(grid.dirichlet_mask, 0.0, d**nu)
    from flatsol.grid import functionals
    E0 = functionals(Field(grid, vals), params).E
    slack = config.dissipation_rtol * (1.0 + abs(E0))
    rec, snaps, status, fail_step, worst, ext_step = _evolve_kernel(
        vals, np.asarray(grid.weights), np.asarray(grid.stiff),
        np.ascontiguousarray(grid.dirichlet_mask), float(params.lam), params.alpha,
        params.beta, float(config.dt), config.nsteps, int(config.stride),
        int(config.reaction_substeps), float(config.extinction_tol),
        int(config.extinction_count), float(config.cap), float(slack),
        bool(config.check_dissipation), dnu, ref, has_ref, bool(config.store_snapshots),
        float(depart_eps))
    traj = Trajectory(grid, params, config, rec, snaps if config.store_snapshots else None,
                      None if ext_step < 0 else ext_step * config.dt, _STOP[status],
                      float(worst))
    if status == 3:
        raise SchemeFailure(
            f"energy increased by {worst:.3g} > slack {slack:.3g} at step {fail_step}",
            step=fail_step, time=fail_step * config.dt, slack=slack, trajectory=traj)
    return traj


def extinction_time(trajectory: Trajectory, tol: float | None = None) -> float | None:
    """First recorded time after which ‖v‖∞ stays below ``tol``."""
    tol = trajectory.config.extinction_tol if tol is None else tol
    linf = trajectory.column("linf")
    t = trajectory.times
    above = np.flatnonzero(linf >= tol)
    if above.size == 0:
        return float(t[0])
    j = above[-1] + 1
    return float(t[j]) if j < t.size else None


# --- experiments ------------------------------------------------------------------

def make_perturbation(grid: Grid, shape: str, delta: float, seed: int = 0,
                      base: Field | None = None) -> Field:
    """Perturbation of H¹₀ size ``delta`` keeping ``base + p`` nonnegative.

    Shapes: ``eigenfunction`` (principal Dirichlet mode), ``bump`` (smooth
    quartic bump centred half way to the boundary) and ``random`` (node-wise
    uniform noise from a seeded generator).  Random noise is clipped so that
    base + p ≥ 0 and rescaled, a few times until both hold.
    """
    if delta < 0:
        raise ConfigError("delta must be nonnegative")
    if shape == "eigenfunction":
        from flatsol.spectral import principal_dirichlet_eigen
        p = np.array(principal_dirichlet_eigen(grid).eigenfield.values)
    elif shape == "bump":
        x = np.asarray(grid.nodes)
        if grid.is_ball:
            c, s = 0.5 * grid.domain.radius, 0.25 * grid.domain.radius
        else:
            c = 0.5 * (grid.domain.a + grid.domain.b)
            s = 0.25 * (grid.domain.b - grid.domain.a)
        z = (x - c) / s
        p = np.where(np.abs(z) < 1, (1 - z**2) ** 2, 0.0)
    elif shape == "random":
        rng = np.random.default_rng(seed)
        p = rng.uniform(-1.0, 1.0, grid.n)
    else:
        raise ConfigError(f"unknown perturbation shape {shape!r}")
    p[grid.dirichlet_mask] = 0.0
    b = np.zeros(grid.n) if base is None else np.asarray(base.values)
    if delta == 0 or not np.any(p):
        return Field(grid, np.zeros(grid.n))
    for _ in range(50):
        p *= delta / h01_norm(Field(grid, p))
        clipped = np.maximum(b + p, 0.0) - b
        if np.allclose(clipped, p, rtol=0, atol=0):
            break
        p = clipped
    if np.any(b + p < 0):
        raise PreconditionError("could not keep the perturbed datum nonnegative")
    return Field(grid, p)


def stability_experiment(gs, perturbation: Field, config: EvolutionConfig,
                         epsilon: float = 5e-2, stop_on_departure: bool = True) -> StabilityVerdict:
    """Evolve gs + perturbation and track the H¹₀ (gradient) distance to gs."""
    base = gs.field
    vals = np.asarray(base.values) + np.asarray(perturbation.values)
    if np.any(vals < 0):
        raise PreconditionError("perturbation makes the initial datum negative")
    delta = h01_norm(perturbation)
    traj = evolve(Field(base.grid, vals), gs.params, config, reference=base,
                  depart_eps=epsilon if stop_on_departure else math.inf)
    dist = traj.column("dist_to_ref")
    over = np.flatnonzero(dist > epsilon)
    if traj.stop_reason == "extinct":
        kind, t = VerdictKind.EXTINCT, extinction_time(traj)
    elif over.size:
        kind, t = VerdictKind.DEPARTED, float(traj.times[over[0]])
    else:
        kind, t = VerdictKind.STABLE, None
    return StabilityVerdict(kind, t, traj, epsilon, delta, float(dist.max()))


@dataclass
class GlobalInstabilityResult:
    verdict: StabilityVerdict
    y: np.ndarray
    dydt: np.ndarray
    minus_two_phi1: np.ndarray
    slope_rel_error: float
    in_well: np.ndarray
    well_invariant: bool
    growth_ratio: float
    y_increasing: bool

    def to_json(self) -> dict:
        return {"verdict": self.verdict.to_json(), "slope_rel_error": self.slope_rel_error,
                "well_invariant": self.well_invariant, "growth_ratio": self.growth_ratio,
                "y_increasing": self.y_increasing, "initially_in_well": bool(self.in_well[0])}


def global_instability_experiment(gs, r: float, config: EvolutionConfig,
                                  y_cap: float = 1e8) -> GlobalInstabilityResult:
    """Start from r·u_λ (β = 1) and follow y(t) = ‖v(t)‖² in L².

    Along the flow dy/dt = −2Φ'_v(1); the discrete slope (centred
    differences of the snapshot series) is compared with that identity.
    Membership in the exterior well (E < E(u_λ), Φ'(1) < 0) is checked at
    every snapshot.
    """
    p = gs.params
    if p.beta != 1.0:
        raise UnsupportedCaseError("the global-instability experiment needs beta = 1")
    if r < 1.0:
        raise PreconditionError(f"r must be at least 1, got {r}")
    cfg = EvolutionConfig(**{**config.__dict__, "cap": math.sqrt(y_cap)})
    traj = evolve(gs.field * r, p, cfg)
    y = traj.column("l2") ** 2
    t = traj.times
    phi1 = traj.column("nehari_residual")
    dydt = np.gradient(y, t)
    target = -2.0 * phi1
    inner = slice(1, max(1, y.size - 1))
    mask = np.abs(target[inner]) > 1e-8 * np.max(np.abs(target[inner]), initial=0.0)
    if np.any(mask):
        rel = np.abs(dydt[inner][mask] - target[inner][mask]) / np.abs(target[inner][mask])
        slope_err = float(np.max(rel))
    else:
        slope_err = 0.0
    E = traj.column("energy")
    in_well = (E < gs.energy) & (phi1 < 0)
    invariant = bool(np.all(in_well) if in_well[0] else True)
    ratio = float(y[-1] / y[0])
    increasing = bool(np.all(np.diff(y) > 0))
    if traj.stop_reason == "cap" or y[-1] >= y_cap:
        kind, tt = VerdictKind.GREW, float(t[-1])
    elif traj.stop_reason == "extinct":
        kind, tt = VerdictKind.EXTINCT, extinction_time(traj)
    else:
        kind, tt = VerdictKind.UNDECIDED, None
    verdict = StabilityVerdict(kind, tt, traj)
    return GlobalInstabilityResult(verdict, y, dydt, target, slope_err, in_well, invariant,
                                   ratio, increasing)


@dataclass
class ComparisonReport:
    max_violation: float
    ordered: bool
    snapshots_checked: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def comparison_check(traj_sub: Trajectory, traj_super: Trajectory,
                     tol: float = 1e-12) -> ComparisonReport:
    """Pointwise order sub ≤ super at every common snapshot."""
    if traj_sub.snapshots is None or traj_super.snapshots is None:
        raise PreconditionError("comparison needs trajectories with stored snapshots")
    k = min(len(traj_sub.snapshots), len(traj_super.snapshots))
    if not np.allclose(traj_sub.times[:k], traj_super.times[:k]):
        raise PreconditionError("trajectories are not recorded at the same times")
    if np.any(traj_sub.snapshots[0] > traj_super.snapshots[0]):
        raise PreconditionError("initial data are not ordered")
    diff = traj_sub.snapshots[:k] - traj_super.snapshots[:k]
    worst = float(max(diff.max(), 0.0))
    return ComparisonReport(worst, worst <= tol, k)


def small_data_decay(params: ProblemParams, v0: Field, config: EvolutionConfig) -> StabilityVerdict:
    """Extinct verdict when ‖v‖∞ falls below the extinction tolerance and stays there."""
    traj = evolve(v0, params, config)
    te = extinction_time(traj)
    if traj.stop_reason == "extinct" or te is not None:
        return StabilityVerdict(VerdictKind.EXTINCT, te, traj)
    return StabilityVerdict(VerdictKind.UNDECIDED, None, traj,
                            notes="no extinction within the horizon")


def large_data_growth(params: ProblemParams, v0: Field, config: EvolutionConfig) -> StabilityVerdict:
    """GrewUnbounded verdict when ‖v‖∞ exceeds ``config.cap``."""
    if not math.isfinite(config.cap):
        raise ConfigError("large_data_growth needs a finite cap")
    traj = evolve(v0, params, config)
    if traj.stop_reason == "cap":
        return StabilityVerdict(VerdictKind.GREW, float(traj.times[-1]), traj)
    if traj.stop_reason == "extinct":
        return StabilityVerdict(VerdictKind.EXTINCT, extinction_time(traj), traj)
    return StabilityVerdict(VerdictKind.UNDECIDED, None, traj,
                            notes="cap not reached within the horizon")
