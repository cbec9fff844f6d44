import math
import warnings

import numpy as np
import pytest

from isoland.config import RunConfig
from isoland.core import DomainError, Params, RadialField, make_grid
from isoland.evolve import (gaussian_density, heat_step, initial_field, lp_monotonicity_report,
                            make_state, monitor, run, second_moment_residual, step)


@pytest.mark.parametrize("scheme", ["divergence", "nondivergence"])
def test_heat_case_step_matches_heat_step(scheme):
    P = Params.make(3, -2.0)
    g = make_grid(12, 256)
    f = gaussian_density(g)
    state = make_state(f, P)
    kappa = P.c_coupling * 1.0
    # a is constant up to quadrature rounding in the heat case
    assert np.ptp(state.pair.a.values) <= 1e-12 * kappa
    new = step(state, 1e-3, scheme, P)
    ref = heat_step(f, 1e-3, kappa)
    assert np.max(np.abs(new.f.values - ref.values)) <= 1e-12 * f.values.max()


def test_zero_density_stays_zero():
    P = Params.make(3, -2.5)
    g = make_grid(8, 128)
    st = make_state(RadialField(g, np.zeros(g.n)), P)
    for scheme in ("divergence", "nondivergence"):
        assert not np.any(step(st, 1e-3, scheme, P).f.values)
    traj, mons = run(RunConfig(gamma=-2.5, initial="zero", n_cells=64, r_max=8.0, dt=1e-3,
                               t_end=0.01, monitor_every=1, snapshot_count=4))
    assert all(not np.any(s.f.values) for s in traj)
    assert second_moment_residual(mons) == 0.0


def test_step_rejects_bad_input():
    P = Params.make(3, -2.5)
    st = make_state(gaussian_density(make_grid(8, 64)), P)
    with pytest.raises(DomainError):
        step(st, -1e-3, "divergence", P)
    with pytest.raises(DomainError):
        step(st, 1e-3, "upwind", P)


def test_mass_drift_over_ten_thousand_steps():
    _, mons = run(RunConfig(gamma=-2.5, n_cells=256, dt=1e-5, t_end=0.1, monitor_every=500))
    m = np.array([r.mass for r in mons])
    assert len(mons) == 21
    assert np.max(np.abs(m / m[0] - 1)) <= 1e-6


def test_heat_run_variance_growth(heat_run):
    # second moment of the heat kernel: M2(t) = 3 (1 + 2 kappa t)
    _, mons = heat_run
    kappa = 1.0 / (2.0 * math.pi ** 2)
    t = np.array([m.t for m in mons])
    m2 = np.array([m.m2 for m in mons])
    assert np.allclose(m2 - m2[0], 6 * kappa * t, rtol=0, atol=2e-5)


def test_scheme_cross_difference_shrinks():
    diffs = []
    for n, dt in ((128, 4e-4), (256, 1e-4), (512, 2.5e-5)):
        out = {}
        for scheme in ("divergence", "nondivergence"):
            traj, _ = run(RunConfig(gamma=-2.5, scheme=scheme, n_cells=n, dt=dt, t_end=0.02,
                                    snapshot_count=2, monitor_every=10 ** 6))
            out[scheme] = traj[-1].f.values
        diffs.append(np.max(np.abs(out["divergence"] - out["nondivergence"])))
    assert diffs[0] > diffs[1] > diffs[2]


def test_second_moment_needs_three_records(heat_run):
    _, mons = heat_run
    with pytest.raises(ValueError):
        second_moment_residual(mons[:2])


def test_lp_report_labels(heat_run):
    _, mons = heat_run
    P = Params.make(3, -2.0)
    rep = lp_monotonicity_report(mons, 1.0, P)
    assert rep.in_range and rep.label == "admissible"
    assert np.max(np.abs(rep.increments)) <= 1e-6
    P24 = Params.make(3, -2.4)
    out = lp_monotonicity_report(mons, 3.0, P24)
    assert not out.in_range and out.label.startswith("outside-range")
    assert out.flagged == [] and out.dissipation_factor < 0
    # dissipation factor 4(p-1)[1/p - (-2-gamma)/(d+gamma)] vanishes at p_max
    P25 = Params.make(3, -2.25)
    assert lp_monotonicity_report(mons, 3.0, P25).dissipation_factor == pytest.approx(0.0, abs=1e-14)


def test_coulomb_variant_needs_nondivergence_scheme():
    cfg = RunConfig(gamma=-3.0, scheme="nondivergence", alpha=0.5, n_cells=128, r_max=8.0,
                    dt=1e-3, t_end=0.01, snapshot_count=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj, mons = run(cfg)
    assert np.all(np.isfinite(traj[-1].f.values))
    P = Params.make(3, -3.0)
    st = make_state(gaussian_density(make_grid(8, 64)), P)
    with pytest.raises(DomainError):
        step(st, 1e-3, "divergence", P)


def test_partial_reaction_runs_and_keeps_positivity():
    traj, mons = run(RunConfig(gamma=-2.4, alpha=0.5, n_cells=128, r_max=10.0, dt=1e-3,
                               t_end=0.02, snapshot_count=3))
    assert all(s.f.values.min() >= 0 for s in traj)
    assert all(m.mass > 0 for m in mons)


def test_initial_field_kinds(tmp_path):
    from isoland.io import write_snapshot
    g = make_grid(8, 128)
    for spec in ("gaussian 0.7", "bump 2", "two_bumps"):
        f = initial_field(g, spec, 2.0)
        assert g.w @ f.values == pytest.approx(2.0, rel=1e-12)
    assert not np.any(initial_field(g, "zero").values)
    P = Params.make(3, -2.5)
    st = make_state(initial_field(g, "gaussian 1.0"), P)
    write_snapshot(tmp_path / "s", st)
    back = initial_field(g, f"file {tmp_path / 's.json'}")
    assert np.array_equal(back.values, st.f.values)
    finer = initial_field(make_grid(8, 256), f"file {tmp_path / 's.json'}")
    assert finer.grid.n == 256 and finer.values.max() > 0


def test_monitor_record_fields():
    P = Params.make(3, -2.5)
    g = make_grid(12, 256)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = monitor(make_state(gaussian_density(g), P), P, (1.0, 2.0, math.inf))
    assert rec.mass == pytest.approx(1.0)
    assert rec.m1 == 0.0
    assert rec.lp[math.inf] == rec.sup_f
    assert rec.m2_rhs == pytest.approx(2 * 2.5 * float(g.w @ (gaussian_density(g).values
                                                              * make_state(gaussian_density(g), P).pair.a.values)))
    assert rec.a_min_ratio >= rec.ell > 0
