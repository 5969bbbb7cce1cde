import csv
import json

import pytest

from seaice_lkf.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, EXIT_RUNTIME, SUMMARY_FIELDS, main
from seaice_lkf.config import ConfigError, load_matrix, load_run, parse_matrix, parse_run
from seaice_lkf.grid import Staggering

TINY_RUN = """
[run]
staggering = "{s}"
h_km = 8
L_km = 64
output_every = 3
solver = "MEVP"

[solver]
n_sub = 30
"""

TINY_MATRIX = """
[matrix]
staggerings = ["B", "CD1", "CD2"]
h_km = [16, 8]
solvers = ["MEVP"]
same_dof = true
L_km = 64
output_every = 3

[solver]
n_sub = 20
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- config parsing --------------------------------------------------------------

def test_parse_run_defaults():
    spec = parse_run({"run": {"staggering": "CD2", "h_km": 4}})
    b = spec.benchmark
    assert b.staggering is Staggering.CD2 and b.h == 4e3 and b.solver.scheme == "MEVP"
    assert b.n_steps == 1440 and spec.label == "CD2_h4km_MEVP"


def test_parse_run_overrides():
    doc = {
        "run": {"staggering": "CD1", "h_km": 8, "solver": "EVP", "dt": 60, "T_end_days": 1, "name": "x"},
        "solver": {"n_sub": 200, "T_evp": 3000.0, "gamma": 0.5},
        "rheology": {"P_star": 30000.0, "pressure_factor": 2},
        "forcing": {"c0_km": [100, 100], "v_max": 20.0, "r_scale_km": 80, "ocean_v_max": 0.0},
        "detector": {"threshold_quantile": 0.9, "dog_sigmas": [1, 4]},
    }
    spec = parse_run(doc)
    b = spec.benchmark
    assert b.solver.n_sub == 200 and b.solver.T_evp == 3000.0 and b.solver.gamma == 0.5
    assert b.rheo.P_star == 30000.0 and b.rheo.pressure_factor == 2
    assert b.cyclone.c0 == (1e5, 1e5) and b.cyclone.r_scale == 8e4 and b.ocean_v_max == 0.0
    assert b.n_steps == 1440 and spec.label == "x"
    assert spec.detector.threshold_quantile == 0.9 and spec.detector.dog_sigmas == (1.0, 4.0)


def test_missing_and_unknown_keys_are_named():
    with pytest.raises(ConfigError) as exc:
        parse_run({"run": {"h_km": 8, "colour": "red"}, "solver": {"n_sub": 10, "nsub": 3}})
    assert set(exc.value.keys) == {"run.staggering", "run.colour", "solver.nsub"}
    assert "run.staggering" in str(exc.value)


@pytest.mark.parametrize("doc", [
    {"run": {"staggering": "C", "h_km": 8}},
    {"run": {"staggering": "B", "h_km": -8}},
    {"run": {"staggering": "B", "h_km": 8}, "solver": {"n_sub": 0}},
    {"run": {"staggering": "B", "h_km": 7}},
    {"run": {"staggering": "B", "h_km": 8}, "detector": {"threshold_quantile": 1.5}},
    {"matrix": {"staggerings": ["B"], "h_km": [8]}},
])
def test_invalid_values_rejected(doc):
    with pytest.raises(ConfigError):
        parse_run(doc)


def test_matrix_expansion_and_same_dof():
    m = parse_matrix({"matrix": {"staggerings": ["B", "CD1", "CD2"], "h_km": [8, 4, 2], "same_dof": True}})
    labels = [r.label for r in m.runs]
    assert len(labels) == len(set(labels)) == 12
    assert sum(not r.benchmark.doubled_cells for r in m.runs) == 9
    assert "B-2x_h8km_MEVP" in labels


def test_matrix_rejects_duplicate_outputs():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_matrix({"matrix": {"staggerings": ["B", "B"], "h_km": [8]}})


def test_toml_files(tmp_path):
    spec = load_run(_write(tmp_path, "r.toml", TINY_RUN.format(s="CD2")))
    assert spec.benchmark.L == 64e3 and spec.benchmark.solver.n_sub == 30
    assert len(load_matrix(_write(tmp_path, "m.toml", TINY_MATRIX)).runs) == 8
    with pytest.raises(ConfigError, match="syntax"):
        load_run(_write(tmp_path, "bad.toml", "[run\nstaggering = 1"))
    with pytest.raises(ConfigError, match="not found"):
        load_run(tmp_path / "nope.toml")


# -- CLI -------------------------------------------------------------------------

def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_cli_run_and_rerun(tmp_path, capsys):
    cfg = _write(tmp_path, "r.toml", TINY_RUN.format(s="B"))
    out = tmp_path / "runs"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--steps", "6"]) == EXIT_OK
    run_dir = out / "B_h8km_MEVP"
    assert len(list((run_dir / "fields").glob("step_*.json"))) == 1 + 6 // 3
    for f in ("final.json", "telemetry.csv", "config.json", "input.json", "lkf_segments.csv",
              "lkf_stats.csv", "summary.json"):
        assert (run_dir / f).exists(), f
    first = json.loads((run_dir / "summary.json").read_text())
    assert main(["run", "--config", str(cfg), "--out", str(out), "--steps", "6"]) == EXIT_OK
    second = json.loads((run_dir / "summary.json").read_text())
    drop = {"wall_time_s"}
    assert {k: v for k, v in first.items() if k not in drop} == {k: v for k, v in second.items() if k not in drop}
    rows = _read_csv(out / "summary.csv")
    assert len(rows) == 1 and list(rows[0]) == SUMMARY_FIELDS
    capsys.readouterr()


def test_cli_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SEAICE_LKF_OUTPUT", str(tmp_path / "envroot"))
    cfg = _write(tmp_path, "r.toml", TINY_RUN.format(s="CD1"))
    assert main(["run", "--config", str(cfg), "--steps", "2"]) == EXIT_OK
    assert (tmp_path / "envroot" / "CD1_h8km_MEVP" / "final.json").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.toml", '[run]\nh_km = 8\ncolour = "red"\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "run.staggering" in err and "run.colour" in err


def test_cli_matrix_summary_and_plots(tmp_path, capsys):
    cfg = _write(tmp_path, "m.toml", TINY_MATRIX)
    out = tmp_path / "m"
    assert main(["matrix", "--config", str(cfg), "--out", str(out), "--steps", "3"]) == EXIT_OK
    rows = _read_csv(out / "summary.csv")
    assert len(rows) == 8
    assert [(r["staggering"], r["doubled_cells"], float(r["h_km"])) for r in rows] == sorted(
        [(r["staggering"], r["doubled_cells"], float(r["h_km"])) for r in rows],
        key=lambda t: (["B", "CD1", "CD2"].index(t[0]), t[1], t[2]))
    by = {r["label"]: r for r in rows}
    assert by["B-2x_h8km_MEVP"]["velocity_dof"] == by["CD2_h8km_MEVP"]["velocity_dof"] == "256"
    assert by["B_h8km_MEVP"]["velocity_dof"] == "128"
    for name in ("plot_lkf_vs_h.csv", "plot_lkf_vs_dof.csv"):
        assert len(_read_csv(out / name)) == 8
    # summarize rebuilds the same table from the run directories
    (out / "summary.csv").unlink()
    assert main(["summarize", str(out)]) == EXIT_OK
    assert _read_csv(out / "summary.csv") == rows
    capsys.readouterr()


def test_cli_matrix_partial_failure(tmp_path, capsys):
    text = TINY_MATRIX.replace("[solver]\nn_sub = 20", "[solver]\nn_sub = 20\n\n[forcing]\nwind_scale = 3000.0")
    text = text.replace('staggerings = ["B", "CD1", "CD2"]', 'staggerings = ["B"]').replace("same_dof = true", "")
    cfg = _write(tmp_path, "m.toml", text)
    code = main(["matrix", "--config", str(cfg), "--out", str(tmp_path / "f"), "--steps", "3"])
    assert code in (EXIT_PARTIAL, EXIT_RUNTIME)
    rows = _read_csv(tmp_path / "f" / "summary.csv")
    assert all(r["status"].startswith("failed") for r in rows) == (code == EXIT_RUNTIME)
    capsys.readouterr()


def test_cli_detect(tmp_path, capsys):
    zero = TINY_RUN.format(s="CD2") + "\n[forcing]\nwind_scale = 0.0\nocean_v_max = 0.0\n"
    cfg = _write(tmp_path, "z.toml", zero)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path), "--steps", "2"]) == EXIT_OK
    run_dir = tmp_path / "CD2_h8km_MEVP"
    capsys.readouterr()
    assert main(["detect", str(run_dir), "--quantile", "0.8"]) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert stats["lkf_count"] == 0 and stats["sensitivity"] == 0
    first = (run_dir / "lkf_stats.csv").read_text()
    assert main(["detect", str(run_dir), "--quantile", "0.8"]) == EXIT_OK
    assert (run_dir / "lkf_stats.csv").read_text() == first
    assert main(["detect", str(tmp_path / "missing")]) == EXIT_RUNTIME
    capsys.readouterr()


def test_cli_grid_info(capsys):
    assert main(["grid-info", "--h-km", "8", "--staggering", "CD2"]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["dof"]["velocity_dof"] == 16384 and info["cells"] == 4096
    assert main(["grid-info", "--h-km", "8", "--doubled"]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["dof"]["velocity_dof"] == 16384 and info["cells"] == 8192


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "seaice_lkf", "grid-info", "--h-km", "16"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["cells"] == 1024
