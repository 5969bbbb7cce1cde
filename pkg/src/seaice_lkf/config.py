"""TOML run and matrix configuration with schema validation.

A run file looks like::

    [run]
    staggering = "CD2"
    h_km = 8
    solver = "MEVP"

    [solver]          # optional overrides of SolverConfig
    n_sub = 100

    [rheology]        # optional overrides of RheoParams
    [forcing]         # optional cyclone / drag settings
    [detector]        # optional DetectorParams

A matrix file replaces ``[run]`` with ``[matrix]`` (lists of staggerings,
resolutions and solvers) and may carry the same optional sections as shared
settings.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .benchmark import BenchmarkConfig
from .forcing import DAY, CycloneParams
from .lkf import DetectorParams
from .momentum import SCHEMES, SolverConfig
from .rheology import RheoParams

STAGGERINGS = ["B", "CD1", "CD2"]


class ConfigError(ValueError):
    """Invalid configuration; ``keys`` lists the offending entries."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        self.keys = [k for k, _ in problems]
        lines = "\n".join(f"  {k}: {msg}" for k, msg in problems)
        super().__init__(f"invalid configuration ({', '.join(self.keys)}):\n{lines}")


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_STAG = {"type": "string", "enum": STAGGERINGS}
_SCHEME = {"type": "string", "enum": list(SCHEMES)}

SECTIONS = {
    "solver": _obj({
        "n_sub": _INT1, "T_evp": _POS, "alpha": {"type": "number", "minimum": 1},
        "beta": {"type": "number", "minimum": 0},
        "picard_tol": _POS, "picard_max": _INT1, "linear_tol": _POS,
        "linear_solver": {"type": "string", "enum": ["direct", "bicgstab"]},
        "gamma": {"type": "number", "minimum": 0}, "evp_dt_sub": _POS, "evp_cfl": _POS,
        "m_min_thickness": _POS, "backend": {"type": "string", "enum": ["compiled", "python"]},
    }),
    "rheology": _obj({
        "rho_ice": _POS, "P_star": _POS, "C": _POS, "e": {"type": "number", "minimum": 1},
        "Delta_min": _POS, "pressure_factor": {"enum": [1, 2, 1.0, 2.0]},
    }),
    "forcing": _obj({
        "c0_km": _PAIR, "c_end_km": _PAIR, "v_max": _POS, "r_scale_km": _POS, "alpha_conv": _NUM,
        "ocean_v_max": {"type": "number", "minimum": 0}, "wind_scale": {"type": "number", "minimum": 0},
        "f_c": _NUM, "rho_a": {"type": "number", "minimum": 0}, "C_a": {"type": "number", "minimum": 0},
        "rho_o": {"type": "number", "minimum": 0}, "C_o": {"type": "number", "minimum": 0},
    }),
    "detector": _obj({
        "log_floor": _POS, "dog_sigmas": _PAIR,
        "threshold_quantile": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "min_length_px": _INT1, "min_width_px": {"type": "integer", "minimum": 2},
        "min_contrast": {"type": "number", "minimum": 0},
    }),
}

RUN_SCHEMA = _obj({
    "run": _obj({
        "staggering": _STAG, "h_km": _POS, "solver": _SCHEME, "L_km": _POS, "T_end_days": _POS,
        "dt": _POS, "output_every": _INT1, "doubled_cells": {"type": "boolean"}, "name": {"type": "string"},
    }, required=["staggering", "h_km"]),
    **SECTIONS,
}, required=["run"])

MATRIX_SCHEMA = _obj({
    "matrix": _obj({
        "staggerings": {"type": "array", "items": _STAG, "minItems": 1},
        "h_km": {"type": "array", "items": _POS, "minItems": 1},
        "solvers": {"type": "array", "items": _SCHEME, "minItems": 1},
        "same_dof": {"type": "boolean"},
        "workers": _INT1,
        "L_km": _POS, "T_end_days": _POS, "dt": _POS, "output_every": _INT1,
        "sensitivity_delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
    }, required=["staggerings", "h_km"]),
    **SECTIONS,
}, required=["matrix"])


def validate(doc: dict, schema: dict) -> None:
    problems = []
    for err in sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path)):
        path = ".".join(str(p) for p in err.path)
        if err.validator == "required":
            missing = [k for k in err.validator_value if k not in err.instance]
            problems += [(".".join(filter(None, [path, k])), "missing required key") for k in missing]
        elif err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            problems += [(".".join(filter(None, [path, k])), "unknown key") for k in extra]
        else:
            problems.append((path or "<root>", err.message))
    if problems:
        raise ConfigError(problems)


def load_toml(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([(str(path), "file not found")]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([(str(path), f"TOML syntax error: {exc}")]) from None


@dataclass(frozen=True)
class RunSpec:
    """A validated run: the benchmark configuration plus detector settings."""

    benchmark: BenchmarkConfig
    detector: DetectorParams = field(default_factory=DetectorParams)
    name: str | None = None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        b = self.benchmark
        tag = "-2x" if b.doubled_cells else ""
        return f"{b.staggering.value}{tag}_h{b.h / 1e3:g}km_{b.solver.scheme}"


def _shared(doc: dict, scheme: str):
    s = dict(doc.get("solver", {}))
    try:
        solver = SolverConfig(scheme=scheme, **s)
        rheo = RheoParams(**doc.get("rheology", {}))
        f = dict(doc.get("forcing", {}))
        cyc = {}
        if "c0_km" in f:
            cyc["c0"] = tuple(1e3 * x for x in f.pop("c0_km"))
        if "c_end_km" in f:
            cyc["c_end"] = tuple(1e3 * x for x in f.pop("c_end_km"))
        if "r_scale_km" in f:
            cyc["r_scale"] = 1e3 * f.pop("r_scale_km")
        for k in ("v_max", "alpha_conv"):
            if k in f:
                cyc[k] = f.pop(k)
        cyclone = CycloneParams(**cyc)
        det = dict(doc.get("detector", {}))
        if "dog_sigmas" in det:
            det["dog_sigmas"] = tuple(det["dog_sigmas"])
        detector = DetectorParams(**det)
    except ValueError as exc:
        raise ConfigError([("<values>", str(exc))]) from None
    return solver, rheo, cyclone, f, detector


def _benchmark(staggering, h_km, scheme, doubled, common: dict, doc: dict, T_end_days=None):
    solver, rheo, cyclone, forcing_rest, detector = _shared(doc, scheme)
    kw = {}
    if "L_km" in common:
        kw["L"] = 1e3 * common["L_km"]
    if "dt" in common:
        kw["dt"] = float(common["dt"])
    if "output_every" in common:
        kw["output_every"] = int(common["output_every"])
    if T_end_days is not None:
        kw["T_end"] = float(T_end_days) * DAY
    try:
        b = BenchmarkConfig(staggering=staggering, h=1e3 * h_km, doubled_cells=doubled, solver=solver,
                            rheo=rheo, cyclone=cyclone, **forcing_rest, **kw)
    except ValueError as exc:
        raise ConfigError([("<values>", str(exc))]) from None
    return b, detector


def parse_run(doc: dict) -> RunSpec:
    validate(doc, RUN_SCHEMA)
    r = doc["run"]
    b, det = _benchmark(r["staggering"], r["h_km"], r.get("solver", "MEVP"), r.get("doubled_cells", False),
                        r, doc, r.get("T_end_days"))
    return RunSpec(b, det, r.get("name"), doc)


def load_run(path) -> RunSpec:
    return parse_run(load_toml(path))


@dataclass(frozen=True)
class MatrixSpec:
    runs: tuple
    workers: int = 1
    sensitivity_delta: float = 0.05
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def detector(self) -> DetectorParams:
        return self.runs[0].detector if self.runs else DetectorParams()


def parse_matrix(doc: dict) -> MatrixSpec:
    validate(doc, MATRIX_SCHEMA)
    m = doc["matrix"]
    solvers = m.get("solvers", ["MEVP"])
    runs = []
    for s in m["staggerings"]:
        for h in m["h_km"]:
            for sch in solvers:
                b, det = _benchmark(s, h, sch, False, m, doc, m.get("T_end_days"))
                runs.append(RunSpec(b, det, None, doc))
    if m.get("same_dof", False):
        for h in m["h_km"]:
            for sch in solvers:
                b, det = _benchmark("B", h, sch, True, m, doc, m.get("T_end_days"))
                runs.append(RunSpec(b, det, None, doc))
    labels = [r.label for r in runs]
    dup = sorted({x for x in labels if labels.count(x) > 1})
    if dup:
        raise ConfigError([("matrix", f"duplicate run outputs: {', '.join(dup)}")])
    return MatrixSpec(tuple(runs), int(m.get("workers", 1)), float(m.get("sensitivity_delta", 0.05)), doc)


def load_matrix(path) -> MatrixSpec:
    return parse_matrix(load_toml(path))
