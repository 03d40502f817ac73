import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatsol.errors import ConfigError, PreconditionError, UnsupportedCaseError
from flatsol.grid import (Field, Interval, boundary_distance_profile, build_grid, functionals,
                          h01_norm, sample, zero_field)
from flatsol.groundstate import find_flat_profile, j_minimize, nehari_minimize
from flatsol.model import make_params, ode_equilibrium
from flatsol.parabolic import (TRAJECTORY_COLUMNS, EvolutionConfig, VerdictKind,
                               comparison_check, evolve, extinction_time,
                               global_instability_experiment, large_data_growth,
                               make_perturbation, small_data_decay, stability_experiment, step)
from flatsol.spectral import principal_dirichlet_eigen

PI = Interval(0.0, math.pi)


@pytest.fixture(scope="module")
def g257():
    return build_grid(PI, 257)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1e-3}, {"t_end": 1e-5},
                                    {"stride": 0}, {"reaction_substeps": 0},
                                    {"extinction_tol": 0.0}, {"cap": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            EvolutionConfig(**kw)

    def test_nsteps(self):
        assert EvolutionConfig(dt=1e-3, t_end=1.0).nsteps == 1000


class TestStep:
    def test_zero_is_absorbing(self, g257):
        p = make_params(0.5, 0.75, 3.0)
        assert np.all(step(zero_field(g257), p, 1e-3).values == 0)
        tr = evolve(zero_field(g257), p, EvolutionConfig(dt=1e-3, t_end=1.0, stride=10))
        assert np.all(tr.column("linf") == 0)

    def test_uniform_centre_tracks_ode(self):
        # pure absorption: away from the boundary layer the centre follows the ODE
        g = build_grid(Interval(-10.0, 10.0), 2001)
        p = make_params(0.5, 1.0, 0.0)
        v0 = sample(g, lambda x: np.where(np.abs(x) < 10.0, 1.0, 0.0))
        tr = evolve(v0, p, EvolutionConfig(dt=1e-4, t_end=1.0, stride=1000,
                                           store_snapshots=True))
        centre = tr.snapshots[:, 1000]
        exact = np.maximum(1 - 0.5 * tr.times, 0) ** 2
        assert np.allclose(centre, exact, rtol=1e-2)

    def test_single_step_matches_evolve(self, g257):
        p = make_params(0.3, 0.6, 2.0)
        v0 = sample(g257, np.sin)
        one = step(v0, p, 1e-3)
        tr = evolve(v0, p, EvolutionConfig(dt=1e-3, t_end=1e-3, stride=1, store_snapshots=True))
        assert np.allclose(one.values, tr.snapshots[-1], rtol=1e-13, atol=1e-15)

    def test_rejects_negative_data(self, g257):
        with pytest.raises(PreconditionError):
            evolve(sample(g257, lambda x: -np.sin(x)), make_params(0.5, 0.75, 1.0),
                   EvolutionConfig(dt=1e-3, t_end=0.01))


class TestFixedPoint:
    @pytest.fixture(scope="class")
    @classmethod
    def state(cls):
        # a Nehari minimiser is a stable discrete equilibrium of the scheme
        g = build_grid(PI, 1025)
        p = make_params(0.5, 0.75, 2.4)
        return nehari_minimize(p, g)

    def test_drift_over_ten_time_units(self, state):
        tr = evolve(state.field, state.params,
                    EvolutionConfig(dt=1e-4, t_end=10.0, stride=1000), reference=state.field)
        rel = tr.column("dist_to_ref").max() / h01_norm(state.field)
        assert rel < 1e-3

    def test_drift_is_first_order_in_dt(self):
        g = build_grid(PI, 257)
        p = make_params(0.5, 0.75, 2.4)
        gs = nehari_minimize(p, g)
        d = [evolve(gs.field, p, EvolutionConfig(dt=dt, t_end=1.0, stride=int(round(1 / dt))),
                    reference=gs.field).column("dist_to_ref")[-1] for dt in (2e-4, 1e-4)]
        assert d[0] / d[1] == pytest.approx(2.0, rel=0.05)


class TestInvariants:
    @settings(max_examples=15)
    @given(st.lists(st.floats(0, 5), min_size=63, max_size=63), st.floats(0.1, 0.9),
           st.floats(0.0, 4.0))
    def test_positivity(self, vals, a, lam):
        g = build_grid(PI, 65)
        v0 = Field(g, np.array([0.0, *vals, 0.0]))
        p = make_params(a, min(1.0, a + 0.1), lam)
        tr = evolve(v0, p, EvolutionConfig(dt=1e-3, t_end=0.2, stride=1, store_snapshots=True,
                                           check_dissipation=False))
        assert np.all(tr.snapshots >= 0)

    @pytest.mark.parametrize("a,b,lam", [(0.5, 0.75, 3.0), (0.3, 1.0, 0.5), (0.2, 0.4, 10.0)])
    def test_energy_dissipation(self, g257, a, b, lam):
        p = make_params(a, b, lam)
        v0 = sample(g257, lambda x: np.sin(x) ** 2)
        tr = evolve(v0, p, EvolutionConfig(dt=1e-4, t_end=1.0, stride=100))
        E = tr.column("energy")
        assert np.all(np.diff(E) <= 1e-8 * (1 + abs(E[0])))
        assert E[-1] < E[0]
        assert tr.max_energy_increase <= 1e-8 * (1 + abs(E[0]))

    def test_records_aligned(self, g257):
        tr = evolve(sample(g257, np.sin), make_params(0.5, 0.75, 1.0),
                    EvolutionConfig(dt=1e-3, t_end=0.5, stride=50, store_snapshots=True))
        assert tr.records.shape == (11, len(TRAJECTORY_COLUMNS))
        assert len(tr.snapshots) == 11
        assert np.allclose(tr.times, np.arange(11) * 0.05)
        last = Field(g257, tr.snapshots[-1])
        assert tr.column("h01")[-1] == pytest.approx(h01_norm(last), rel=1e-12)
        assert tr.column("energy")[-1] == pytest.approx(
            functionals(last, tr.params).E, rel=1e-10, abs=1e-14)

    def test_nondegeneracy_persists(self):
        g = build_grid(PI, 513)
        p = make_params(0.5, 0.75, 8.0)
        d = boundary_distance_profile(g).values
        v0 = Field(g, 50.0 * d**4)
        tr = evolve(v0, p, EvolutionConfig(dt=1e-4, t_end=2.0, stride=500))
        c = tr.column("nondeg_const")
        assert np.all(c > 0.1 * c[0])


class TestExtinction:
    def test_pure_absorption_bound(self, g257):
        tr = evolve(sample(g257, np.sin), make_params(0.5, 1.0, 0.0),
                    EvolutionConfig(dt=1e-4, t_end=3.0, stride=100))
        te = extinction_time(tr)
        assert te is not None and te <= 2.0
        assert tr.stop_reason == "extinct"

    def test_below_principal_eigenvalue(self, g257):
        tr = evolve(sample(g257, np.sin), make_params(0.5, 1.0, 0.5),
                    EvolutionConfig(dt=1e-4, t_end=6.0, stride=100))
        assert extinction_time(tr) is not None

    def test_monotone_in_lambda(self, g257):
        v0 = sample(g257, np.sin)
        cfg = EvolutionConfig(dt=1e-4, t_end=6.0, stride=50)
        t = [extinction_time(evolve(v0, make_params(0.5, 1.0, lam), cfg)) for lam in (0.25, 0.75)]
        assert None not in t and t[0] <= t[1]

    def test_persisting_solution(self, g257):
        p = make_params(0.5, 1.0, 1.5)
        gs = j_minimize(p, g257)
        tr = evolve(gs.field * 1.5, p, EvolutionConfig(dt=1e-4, t_end=2.0, stride=100))
        assert extinction_time(tr) is None and tr.stop_reason == "horizon"

    def test_tolerance_argument(self, g257):
        tr = evolve(sample(g257, np.sin), make_params(0.5, 1.0, 0.0),
                    EvolutionConfig(dt=1e-4, t_end=3.0, stride=100))
        loose = extinction_time(tr, tol=1e-2)
        assert loose is not None and loose <= extinction_time(tr)


class TestPerturbation:
    @pytest.mark.parametrize("shape", ["eigenfunction", "bump", "random"])
    def test_size(self, g257, shape):
        p = make_perturbation(g257, shape, 1e-2, seed=3)
        assert h01_norm(p) == pytest.approx(1e-2, rel=1e-12)
        assert np.all(p.values[g257.dirichlet_mask] == 0)

    def test_seeded(self, g257):
        a = make_perturbation(g257, "random", 1e-2, seed=7)
        b = make_perturbation(g257, "random", 1e-2, seed=7)
        c = make_perturbation(g257, "random", 1e-2, seed=8)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_keeps_base_nonnegative(self, g257):
        base = sample(g257, lambda x: 0.01 * np.sin(x))
        p = make_perturbation(g257, "random", 1e-2, seed=1, base=base)
        assert np.all(base.values + p.values >= 0)

    def test_zero_and_errors(self, g257):
        assert not np.any(make_perturbation(g257, "bump", 0.0).values)
        with pytest.raises(ConfigError):
            make_perturbation(g257, "bump", -1.0)
        with pytest.raises(ConfigError):
            make_perturbation(g257, "wave", 1.0)


@pytest.fixture(scope="module")
def flat_unstable():
    return find_flat_profile(make_params(0.5, 0.75, 2.0, 1), n=1025)


class TestStability:
    def test_unstable_flat_departs(self, flat_unstable):
        pert = make_perturbation(flat_unstable.field.grid, "eigenfunction", 1e-2,
                                 base=flat_unstable.field)
        v = stability_experiment(flat_unstable, pert,
                                 EvolutionConfig(dt=1e-4, t_end=50.0, stride=500))
        assert v.kind in (VerdictKind.DEPARTED, VerdictKind.EXTINCT)
        assert v.max_distance > v.epsilon or v.kind is VerdictKind.EXTINCT

    def test_zero_perturbation_stable(self, flat_unstable):
        g = flat_unstable.field.grid
        v = stability_experiment(flat_unstable, zero_field(g),
                                 EvolutionConfig(dt=1e-4, t_end=1.0, stride=100))
        assert v.kind is VerdictKind.STABLE and v.delta == 0

    def test_negative_datum_rejected(self, flat_unstable):
        g = flat_unstable.field.grid
        with pytest.raises(PreconditionError):
            stability_experiment(flat_unstable, flat_unstable.field * -2.0,
                                 EvolutionConfig(dt=1e-4, t_end=0.01))

    def test_verdict_json(self, flat_unstable):
        g = flat_unstable.field.grid
        v = stability_experiment(flat_unstable, zero_field(g),
                                 EvolutionConfig(dt=1e-4, t_end=0.01, stride=10))
        assert v.to_json()["kind"] == "Stable"


class TestGlobalInstability:
    @pytest.fixture(scope="class")
    @classmethod
    def gs(cls):
        return j_minimize(make_params(0.5, 1.0, 2.0), build_grid(PI, 257))

    def test_r_one_is_stationary(self, gs):
        res = global_instability_experiment(gs, 1.0, EvolutionConfig(dt=1e-4, t_end=1.0,
                                                                     stride=100))
        assert np.max(np.abs(res.y / res.y[0] - 1)) < 1e-3

    def test_growth_and_slope(self, gs):
        res = global_instability_experiment(gs, 1.05, EvolutionConfig(dt=1e-4, t_end=10.0,
                                                                      stride=100), y_cap=1e4)
        assert res.y_increasing
        assert res.slope_rel_error < 0.05
        assert res.well_invariant and res.in_well[0]

    def test_errors(self, gs):
        with pytest.raises(PreconditionError):
            global_instability_experiment(gs, 0.9, EvolutionConfig())
        q = nehari_minimize(make_params(0.5, 0.75, 3.0), build_grid(PI, 129))
        with pytest.raises(UnsupportedCaseError):
            global_instability_experiment(q, 1.05, EvolutionConfig())


class TestComparison:
    def _run(self, v0, p):
        return evolve(v0, p, EvolutionConfig(dt=1e-4, t_end=1.0, stride=100,
                                             store_snapshots=True))

    def test_identical(self, g257):
        p = make_params(0.5, 0.75, 3.0)
        v0 = sample(g257, np.sin)
        rep = comparison_check(self._run(v0, p), self._run(v0, p))
        assert rep.max_violation == 0 and rep.ordered

    def test_scaled_datum(self, g257):
        p = make_params(0.5, 0.75, 3.0)
        v0 = sample(g257, lambda x: np.sin(x) * (1 + np.cos(3 * x) ** 2))
        rep = comparison_check(self._run(v0 * 0.9, p), self._run(v0, p))
        assert rep.ordered and rep.snapshots_checked == 101

    def test_ground_state_below_multiple(self):
        p = make_params(0.5, 1.0, 2.0)
        gs = j_minimize(p, build_grid(PI, 257))
        rep = comparison_check(self._run(gs.field, p), self._run(gs.field * 1.1, p))
        assert rep.ordered

    @settings(max_examples=10)
    @given(st.lists(st.floats(0, 2), min_size=31, max_size=31),
           st.lists(st.floats(0, 1), min_size=31, max_size=31))
    def test_order_preserved(self, lo, gap):
        g = build_grid(PI, 33)
        a = np.array([0.0, *lo, 0.0])
        b = a + np.array([0.0, *gap, 0.0])
        p = make_params(0.4, 0.7, 2.0)
        cfg = EvolutionConfig(dt=1e-3, t_end=0.3, stride=10, store_snapshots=True,
                              check_dissipation=False)
        rep = comparison_check(evolve(Field(g, a), p, cfg), evolve(Field(g, b), p, cfg))
        assert rep.ordered

    def test_errors(self, g257):
        p = make_params(0.5, 0.75, 3.0)
        v0 = sample(g257, np.sin)
        with pytest.raises(PreconditionError):
            comparison_check(self._run(v0, p), self._run(v0 * 0.5, p))
        bare = evolve(v0, p, EvolutionConfig(dt=1e-4, t_end=0.01))
        with pytest.raises(PreconditionError):
            comparison_check(bare, bare)


class TestSmallAndLargeData:
    def test_small_data_decays(self, g257):
        p = make_params(0.5, 0.75, 4.0)
        phi1 = principal_dirichlet_eigen(g257).eigenfield
        v0 = phi1 * (0.5 * ode_equilibrium(p) / float(np.max(phi1.values)))
        v = small_data_decay(p, v0, EvolutionConfig(dt=1e-5, t_end=1.0, stride=100))
        assert v.kind is VerdictKind.EXTINCT

    def test_zero_decays_immediately(self, g257):
        v = small_data_decay(make_params(0.5, 0.75, 4.0), zero_field(g257),
                             EvolutionConfig(dt=1e-3, t_end=1.0, stride=10))
        assert v.kind is VerdictKind.EXTINCT and v.time == 0.0

    def test_large_data_grows(self):
        # linear source above the principal eigenvalue: growth is exponential
        p = make_params(0.5, 1.0, 2.0)
        gs = j_minimize(p, build_grid(PI, 257))
        lift = 1.1 * ode_equilibrium(p)
        v0 = Field(gs.field.grid, np.where(gs.field.grid.dirichlet_mask, 0.0,
                                           gs.field.values + lift))
        v = large_data_growth(p, v0, EvolutionConfig(dt=1e-4, t_end=30.0, stride=100,
                                                     cap=1e3))
        assert v.kind is VerdictKind.GREW

    def test_needs_cap(self, g257):
        with pytest.raises(ConfigError):
            large_data_growth(make_params(0.5, 1.0, 2.0), sample(g257, np.sin),
                              EvolutionConfig())


def test_trajectory_csv(tmp_path, g257):
    tr = evolve(sample(g257, np.sin), make_params(0.5, 0.75, 1.0),
                EvolutionConfig(dt=1e-3, t_end=0.1, stride=10, store_snapshots=True))
    path = tr.write_csv(tmp_path / "traj.csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == 12
    files = tr.write_snapshots(tmp_path / "snaps")
    assert len(files) == 11 and files[0].exists()
