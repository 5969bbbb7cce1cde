"""The idealized moving-cyclone experiment.

A closed 512 km box of thin, fully ice-covered sea ice is forced for two days
by a convergent cyclone crossing the domain diagonally and by a steady
circular ocean current. Each 2-minute step solves the momentum equation with
the chosen scheme and advects ``H`` and ``A`` with donor-cell upwind.
"""
from __future__ import annotations

import csv
import json
import logging
import subprocess
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .discretization import Discretization, discretization
from .forcing import DAY, CycloneParams, initial_thickness, ocean_field, wind_field
from .grid import Grid, Staggering, build_quad_grid, dof_counts
from .momentum import Forcing, SolverBlowup, SolverConfig, State, momentum_step
from .rheology import RheoParams, shear_deformation
from .transport import CFLViolation, TracerFields, face_normal_velocity, upwind_step

log = logging.getLogger(__name__)

TELEMETRY_FIELDS = (
    "step", "time_s", "iterations", "residual", "converged",
    "max_speed", "volume", "volume_drift", "A_min", "A_max", "H_min", "wall_s",
)


class BenchmarkAborted(RuntimeError):
    """A run stopped early; ``step`` is the failing step and ``dump`` the field dump."""

    def __init__(self, step: int, reason: str, dump: Path | None = None):
        self.step = step
        self.dump = dump
        where = f"; fields dumped to {dump}" if dump is not None else ""
        super().__init__(f"run aborted at step {step}: {reason}{where}")


@dataclass(frozen=True)
class BenchmarkConfig:
    staggering: Staggering = Staggering.B
    h: float = 8e3
    L: float = 512e3
    T_end: float = 2 * DAY
    dt: float = 120.0
    output_every: int = 360
    # B-grid with twice the cells (cells of h x h/2); matches CD dof on h
    doubled_cells: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    rheo: RheoParams = field(default_factory=RheoParams)
    cyclone: CycloneParams = field(default_factory=CycloneParams)
    ocean_v_max: float = 0.01
    wind_scale: float = 1.0
    f_c: float = 1.46e-4
    rho_a: float = 1.3
    C_a: float = 1.2e-3
    rho_o: float = 1026.0
    C_o: float = 5.5e-3

    def __post_init__(self):
        object.__setattr__(self, "staggering", Staggering.parse(self.staggering))
        if self.dt <= 0 or self.T_end <= 0:
            raise ValueError("dt and T_end must be positive")
        n = self.T_end / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T_end/dt must be an integer, got {n}")
        m = self.L / self.h
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ValueError(f"L/h must be an integer, got {m}")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")
        if self.doubled_cells and self.staggering is not Staggering.B:
            raise ValueError("doubled_cells is meant for the B-grid same-dof comparison")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))

    def build_grid(self) -> Grid:
        return build_quad_grid(self.L, self.h, self.h / 2 if self.doubled_cells else None)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["staggering"] = self.staggering.value
        d["cyclone"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["cyclone"].items()}
        return d


@dataclass
class RunResult:
    config: BenchmarkConfig
    grid: Grid
    state: State
    shear: np.ndarray
    telemetry: list
    wall_time: float
    out_dir: Path | None = None

    @property
    def volume_drift(self) -> float:
        return max(abs(r["volume_drift"]) for r in self.telemetry) if self.telemetry else 0.0


def initial_state(grid: Grid, disc: Discretization | None = None) -> State:
    """A = 1, sinusoidally perturbed thickness around 0.3 m, ice at rest."""
    x, y = np.asarray(grid.cell_centers).T
    H = initial_thickness(x, y)
    npts = disc.n_points if disc is not None else len(grid.vertices)
    return State(np.zeros((npts, 2)), H, np.ones_like(H))


def make_forcing(cfg: BenchmarkConfig, disc: Discretization, t: float) -> Forcing:
    wind = disc.sample(lambda x, y: wind_field(x, y, t, cfg.cyclone)) * cfg.wind_scale
    ocean = disc.sample(lambda x, y: ocean_field(x, y, cfg.L, cfg.ocean_v_max))
    return Forcing(wind, ocean, f_c=cfg.f_c, rho_a=cfg.rho_a, C_a=cfg.C_a, rho_o=cfg.rho_o, C_o=cfg.C_o)


def shear_field(disc: Discretization, vel) -> np.ndarray:
    """Shear deformation rate (1/s) on the elements of ``disc``."""
    return shear_deformation(disc.strain(np.asarray(vel, dtype=float)).eps)


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


# -- field dumps -----------------------------------------------------------

_UNITS = {"u": "m/s", "v": "m/s", "H": "m", "A": "1", "shear": "1/s"}


def write_snapshot(directory: Path, name: str, fields: dict, meta: dict) -> Path:
    """Write each field as raw little-endian float64 plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for key, arr in fields.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        fname = f"{name}.{key}.f64"
        arr.tofile(directory / fname)
        entries[key] = {"file": fname, "shape": list(arr.shape), "units": _UNITS.get(key, "")}
    sidecar = directory / f"{name}.json"
    sidecar.write_text(json.dumps({**meta, "fields": entries}, indent=2, sort_keys=True))
    return sidecar


def read_snapshot(sidecar) -> tuple[dict, dict]:
    """Reload a snapshot written by :func:`write_snapshot`; returns ``(fields, meta)``."""
    sidecar = Path(sidecar)
    meta = json.loads(sidecar.read_text())
    fields = {}
    for key, e in meta["fields"].items():
        fields[key] = np.fromfile(sidecar.parent / e["file"], dtype="<f8").reshape(e["shape"])
    return fields, meta


def _state_fields(disc: Discretization, state: State) -> dict:
    return {
        "u": state.vel[:, 0], "v": state.vel[:, 1],
        "H": state.H, "A": state.A, "shear": shear_field(disc, state.vel),
    }


def _meta(cfg: BenchmarkConfig, grid: Grid, step: int, t: float, code: str) -> dict:
    return {
        "step": step,
        "time_s": t,
        "grid": {"L": grid.L, "h": grid.h, "hy": grid.hy, "nx": grid.nx, "ny": grid.ny},
        "staggering": cfg.staggering.value,
        "dof": dof_counts(grid, cfg.staggering).as_dict(),
        "code_version": code,
        "config": cfg.to_dict(),
    }


# -- time loop ---------------------------------------------------------------

def run_benchmark(cfg: BenchmarkConfig, out_dir=None, state: State | None = None,
                  n_steps: int | None = None) -> RunResult:
    """Run the experiment; with ``out_dir`` set, write snapshots and telemetry.

    ``n_steps`` truncates the run (useful for smoke tests); the default is
    ``T_end / dt``.
    """
    grid = cfg.build_grid()
    disc = discretization(grid, cfg.staggering)
    state = initial_state(grid, disc) if state is None else state.copy()
    n_steps = cfg.n_steps if n_steps is None else int(n_steps)
    out = Path(out_dir) if out_dir is not None else None
    code = git_describe() if out is not None else ""
    areas = np.asarray(grid.cell_areas)
    vol0 = float(np.sum(state.H * areas))

    telemetry: list[dict] = []
    writer = None
    fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        fh = open(out / "telemetry.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=TELEMETRY_FIELDS)
        writer.writeheader()
        write_snapshot(out / "fields", "step_00000", _state_fields(disc, state), _meta(cfg, grid, 0, 0.0, code))

    def abort(step, reason):
        dump = None
        if out is not None:
            dump = write_snapshot(out / "abort", f"step_{step:05d}", _state_fields(disc, state),
                                  _meta(cfg, grid, step, step * cfg.dt, code))
            fh.close()
        raise BenchmarkAborted(step, reason, dump)

    t_start = time.perf_counter()
    try:
        for step in range(1, n_steps + 1):
            t0 = time.perf_counter()
            t = (step - 1) * cfg.dt
            forcing = make_forcing(cfg, disc, t)
            try:
                res = momentum_step(disc, state, forcing, cfg.dt, cfg.solver, cfg.rheo)
            except SolverBlowup as exc:
                abort(step, str(exc))
            if not np.all(np.isfinite(res.vel)):
                abort(step, "non-finite velocity")
            faces = face_normal_velocity(cfg.staggering, grid, res.vel)
            try:
                tr = upwind_step(TracerFields(state.H, state.A), faces, grid, cfg.dt)
            except CFLViolation as exc:
                state = State(res.vel, state.H, state.A, res.sigma, res.tau)
                abort(step, str(exc))
            state = State(res.vel, tr.H, tr.A, res.sigma, res.tau)
            vol = float(np.sum(state.H * areas))
            row = {
                "step": step,
                "time_s": step * cfg.dt,
                "iterations": res.iterations,
                "residual": res.residual,
                "converged": int(bool(res.converged)),
                "max_speed": float(np.sqrt((res.vel**2).sum(axis=1)).max()),
                "volume": vol,
                "volume_drift": (vol - vol0) / vol0 if vol0 else 0.0,
                "A_min": float(state.A.min()),
                "A_max": float(state.A.max()),
                "H_min": float(state.H.min()),
                "wall_s": time.perf_counter() - t0,
            }
            telemetry.append(row)
            if writer is not None:
                writer.writerow(row)
                if step % cfg.output_every == 0 or step == n_steps:
                    write_snapshot(out / "fields", f"step_{step:05d}", _state_fields(disc, state),
                                   _meta(cfg, grid, step, step * cfg.dt, code))
    finally:
        if fh is not None and not fh.closed:
            fh.close()
    wall = time.perf_counter() - t_start
    shear = shear_field(disc, state.vel)
    if out is not None:
        write_snapshot(out, "final", _state_fields(disc, state),
                       _meta(cfg, grid, n_steps, n_steps * cfg.dt, code))
    log.info("run %s h=%g %s finished in %.1f s", cfg.staggering.value, cfg.h, cfg.solver.scheme, wall)
    return RunResult(cfg, grid, state, shear, telemetry, wall, out)


def expected_snapshots(cfg: BenchmarkConfig) -> int:
    """Number of periodic snapshots written under ``fields/`` (excluding step 0)."""
    n = cfg.n_steps
    return n // cfg.output_every + (0 if n % cfg.output_every == 0 else 1)


def rigid_limit(cfg: BenchmarkConfig, factor: float = 1e6) -> BenchmarkConfig:
    """The same experiment with ice strength multiplied by ``factor``.

    mEVP is stable only for alpha, beta above roughly ``sqrt(zeta dt / (m h^2))``,
    which grows like ``sqrt(P_star)``; the relaxation parameters are scaled
    accordingly so the stiff run does not go unstable.
    """
    r = cfg.rheo
    solver = cfg.solver
    if solver.scheme == "MEVP" and factor > 1:
        k = factor**0.5
        solver = replace(solver, alpha=solver.alpha * k, beta=solver.beta * k)
    return replace(cfg, rheo=replace(r, P_star=r.P_star * factor), solver=solver)


__all__ = [
    "BenchmarkAborted", "BenchmarkConfig", "RunResult", "initial_state", "make_forcing",
    "shear_field", "run_benchmark", "write_snapshot", "read_snapshot", "expected_snapshots",
    "rigid_limit", "git_describe",
]
