import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seaice_lkf.benchmark import (TELEMETRY_FIELDS, BenchmarkAborted, BenchmarkConfig, expected_snapshots,
                                  initial_state, read_snapshot, rigid_limit, run_benchmark, write_snapshot)
from seaice_lkf.discretization import discretization
from seaice_lkf.forcing import DAY, CycloneParams, ocean_field, wind_field
from seaice_lkf.grid import build_quad_grid
from seaice_lkf.momentum import SolverConfig

TINY = dict(L=64e3, h=8e3, T_end=1200.0, output_every=4)


def test_config_validation():
    assert BenchmarkConfig().n_steps == 1440
    with pytest.raises(ValueError):
        BenchmarkConfig(dt=7.0)
    with pytest.raises(ValueError):
        BenchmarkConfig(h=7e3)
    with pytest.raises(ValueError):
        BenchmarkConfig(staggering="CD2", doubled_cells=True)
    g = BenchmarkConfig(doubled_cells=True).build_grid()
    assert (g.nx, g.ny) == (64, 128)


def test_initial_state():
    g = build_quad_grid(512e3, 8e3)
    s = initial_state(g, discretization(g, "B"))
    assert 0.29 <= s.H.min() and s.H.max() <= 0.31
    assert np.all(s.A == 1.0) and not s.vel.any()
    vol = np.sum(s.H * g.cell_areas)
    assert math.isclose(vol, s.H.mean() * g.L**2, rel_tol=1e-12)


def test_wind_examples():
    p = CycloneParams()
    for t in (0.0, DAY, 2 * DAY):
        c = p.center(t)
        np.testing.assert_allclose(wind_field(c[0], c[1], t, p), 0.0)
    np.testing.assert_allclose(p.center(2 * DAY), [460.8e3, 460.8e3])
    ang = np.linspace(0, 2 * np.pi, 17)
    c = p.center(DAY)
    u, v = wind_field(c[0] + p.r_scale * np.cos(ang), c[1] + p.r_scale * np.sin(ang), DAY, p)
    np.testing.assert_allclose(np.hypot(u, v), p.v_max, rtol=1e-12)


@given(st.floats(1e3, 4e5), st.floats(0, 2 * np.pi), st.floats(0, 2 * DAY))
def test_wind_is_a_convergent_cyclonic_vortex(r, phi, t):
    p = CycloneParams()
    c = p.center(t)
    rx, ry = r * np.cos(phi), r * np.sin(phi)
    u, v = wind_field(c[0] + rx, c[1] + ry, t, p)
    s = r / p.r_scale
    assert math.isclose(math.hypot(u, v), p.v_max * s * math.exp(1 - s), rel_tol=1e-9)
    radial = (u * rx + v * ry) / r
    tangential = (-u * ry + v * rx) / r
    assert radial < 0 < tangential
    assert math.isclose(math.degrees(math.atan2(-radial, tangential)), p.alpha_conv, abs_tol=1e-6)


def test_ocean_examples():
    L = 512e3
    np.testing.assert_allclose(ocean_field(L / 2, L / 2, L), 0.0)
    np.testing.assert_allclose(ocean_field(0.0, 0.0, L), [-0.01, 0.01])
    # analytic divergence by central differences (the field is linear)
    x, y, e = 1e5, 3e5, 1.0
    du = (ocean_field(x + e, y, L)[0] - ocean_field(x - e, y, L)[0]) / (2 * e)
    dv = (ocean_field(x, y + e, L)[1] - ocean_field(x, y - e, L)[1]) / (2 * e)
    assert abs(du + dv) < 1e-15


@pytest.mark.parametrize("s", ["B", "CD1", "CD2"])
def test_zero_forcing_keeps_initial_state(s):
    cfg = BenchmarkConfig(staggering=s, wind_scale=0.0, ocean_v_max=0.0, **TINY)
    r = run_benchmark(cfg)
    s0 = initial_state(cfg.build_grid(), discretization(cfg.build_grid(), s))
    assert not r.state.vel.any()
    np.testing.assert_allclose(r.state.H, s0.H, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(r.state.A, s0.A)


def test_snapshot_round_trip(tmp_path, rng):
    fields = {"u": rng.normal(size=7), "shear": rng.random((3, 4))}
    side = write_snapshot(tmp_path, "snap", fields, {"step": 3, "staggering": "CD1"})
    assert (tmp_path / "snap.u.f64").stat().st_size == 7 * 8
    back, meta = read_snapshot(side)
    assert meta["step"] == 3 and meta["fields"]["shear"]["shape"] == [3, 4]
    for k in fields:
        np.testing.assert_array_equal(back[k], fields[k])


@pytest.mark.parametrize("s", ["B", "CD1", "CD2"])
def test_short_run_artifacts(s, tmp_path):
    cfg = BenchmarkConfig(staggering=s, **TINY)
    r = run_benchmark(cfg, tmp_path)
    assert len(r.telemetry) == cfg.n_steps == 10
    with open(tmp_path / "telemetry.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == TELEMETRY_FIELDS and len(rows) == 10
    snaps = sorted((tmp_path / "fields").glob("step_*.json"))
    assert len(snaps) == 1 + expected_snapshots(cfg) == 4
    fields, meta = read_snapshot(tmp_path / "final.json")
    assert meta["staggering"] == s and meta["step"] == 10 and meta["code_version"]
    assert meta["config"]["solver"]["scheme"] == "MEVP"
    np.testing.assert_array_equal(fields["shear"], r.shear)
    np.testing.assert_array_equal(fields["H"], r.state.H)
    assert json.loads((tmp_path / "config.json").read_text())["h"] == 8e3
    assert r.volume_drift <= 1e-12
    assert all(0 <= t["A_min"] <= t["A_max"] <= 1 and t["H_min"] >= 0 for t in r.telemetry)


def test_runs_are_deterministic():
    cfg = BenchmarkConfig(staggering="CD1", **TINY)
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    np.testing.assert_array_equal(a.state.vel, b.state.vel)
    np.testing.assert_array_equal(a.state.H, b.state.H)


def test_abort_dumps_fields(tmp_path):
    # a wind strong enough to push ice across a cell in one step
    cfg = BenchmarkConfig(wind_scale=2e3, solver=SolverConfig(n_sub=30), **TINY)
    with pytest.raises(BenchmarkAborted) as exc:
        run_benchmark(cfg, tmp_path)
    assert exc.value.step >= 1
    assert exc.value.dump is not None and exc.value.dump.exists()
    fields, meta = read_snapshot(exc.value.dump)
    assert meta["step"] == exc.value.step and "u" in fields


def test_rigid_limit_config():
    cfg = BenchmarkConfig()
    rigid = rigid_limit(cfg)
    assert rigid.rheo.P_star == 27500.0 * 1e6
    assert rigid.solver.alpha == rigid.solver.beta == 500.0 * 1e3
    assert cfg.rheo.P_star == 27500.0 and cfg.solver.alpha == 500.0


@pytest.mark.slow
def test_eight_km_b_grid_run_and_rigid_limit():
    cfg = BenchmarkConfig(staggering="B")
    r = run_benchmark(cfg)
    assert len(r.telemetry) == 1440
    assert max(t["max_speed"] for t in r.telemetry) < 1.0
    rigid = run_benchmark(rigid_limit(cfg))
    assert rigid.shear.max() < 0.1 * r.shear.max()
