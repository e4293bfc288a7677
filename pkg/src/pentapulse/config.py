"""Scenario configuration: strict parsing, canonical serialization and execution."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .adiabaticity import Verdict, medium_margins, single_atom_margins
from .core import Grid, PulseEnvelope, PulseSet, SchemeKind, resonant_detunings
from .dynamics import (
    AtomState,
    StepSizeError,
    integrate_tdse,
    project_onto_dressed,
)
from .eigen import jacobi_eigh, build_hamiltonian, track_eigenvectors, DegenerateCrossing
from .propagation import (
    FieldMap,
    MediumParams,
    PropagationError,
    RegimeError,
    conservation_residual,
    probe_delay,
    propagate,
    scaled_length,
)
from .storage import (
    DoubleStorageSchedule,
    FIVE_LEVEL,
    LAMBDA_123,
    compute_x_max,
    double_storage_protocol,
    retrieve,
    write_pulse,
)

EXPERIMENTS = ("eigen", "transfer", "btransfer", "propagate", "store", "double-store", "check-adiabatic")
X_UNITS = ("absolute", "L", "x_max")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_REFUSED = 2
EXIT_NUMERICAL = 3

_TOP_REQUIRED = ("experiment", "scheme", "pulses", "detunings", "grid")
_TOP_OPTIONAL = ("name", "description", "medium", "thresholds", "T", "x_unit", "x_report", "checks", "output", "seed")
_GRID_REQUIRED = ("tau_min", "tau_max", "n_tau")
_GRID_OPTIONAL = ("x_max", "n_x")
_PULSE_KEYS = {"GAUSSIAN": ("kind", "amplitude", "width", "center"), "TABULATED": ("kind", "samples")}
_THRESHOLD_KEYS = ("adiabatic", "medium_small")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ScenarioConfig:
    experiment: str
    scheme: SchemeKind
    pulses: tuple[PulseEnvelope, ...]
    detunings: tuple[float, float, float, float]
    grid: dict
    name: str = ""
    description: str = ""
    medium_q: tuple[float, float, float, float] | None = None
    thresholds: dict = field(default_factory=dict)
    T: float | None = None
    x_unit: str = "absolute"
    x_report: tuple[float, ...] = ()
    checks: dict = field(default_factory=dict)
    output: str | None = None
    seed: int | None = None

    @property
    def pulse_set(self) -> PulseSet:
        return PulseSet(self.pulses, self.detunings, self.scheme)

    @property
    def medium(self) -> MediumParams:
        return MediumParams(self.medium_q or (1.0, 1.0, 1.0, 1.0), self.scheme)

    def length_unit(self) -> float:
        if self.x_unit == "absolute":
            return 1.0
        q = self.medium.q[1]
        if self.x_unit == "L":
            return scaled_length(self.pulse_set, q)
        return compute_x_max(self.pulse_set, q)

    def make_grid(self) -> Grid:
        g = self.grid
        unit = self.length_unit() if "x_max" in g else 1.0
        return Grid(float(g["tau_min"]), float(g["tau_max"]), int(g["n_tau"]),
                    float(g.get("x_max", 0.0)) * unit, int(g.get("n_x", 1)))

    def report_depths(self) -> list[float]:
        unit = self.length_unit()
        return [float(v) * unit for v in self.x_report]

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "experiment": self.experiment,
            "scheme": self.scheme.value,
            "pulses": [_pulse_to_dict(p) for p in self.pulses],
            "detunings": list(self.detunings),
            "grid": dict(self.grid),
        }
        if self.name:
            d["name"] = self.name
        if self.description:
            d["description"] = self.description
        if self.medium_q is not None:
            d["medium"] = {"q": list(self.medium_q)}
        if self.thresholds:
            d["thresholds"] = dict(self.thresholds)
        if self.T is not None:
            d["T"] = self.T
        if self.x_unit != "absolute":
            d["x_unit"] = self.x_unit
        if self.x_report:
            d["x_report"] = list(self.x_report)
        if self.checks:
            d["checks"] = dict(self.checks)
        if self.output is not None:
            d["output"] = self.output
        if self.seed is not None:
            d["seed"] = self.seed
        return d


def _pulse_to_dict(p: PulseEnvelope) -> dict:
    if p.kind.value == "GAUSSIAN":
        return {"kind": "GAUSSIAN", "amplitude": p.amplitude, "width": p.width, "center": p.center}
    return {"kind": "TABULATED", "samples": [list(s) for s in p.samples]}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_keys(obj: dict, required, optional, where: str, errors: list[str]) -> None:
    for k in required:
        if k not in obj:
            errors.append(f"{where}: missing required key '{k}'")
    for k in obj:
        if k not in required and k not in optional:
            errors.append(f"{where}: unknown key '{k}'")


def _parse_pulse(obj, i: int, errors: list[str]) -> PulseEnvelope | None:
    where = f"pulses[{i}]"
    if not isinstance(obj, dict):
        errors.append(f"{where}: must be an object")
        return None
    kind = obj.get("kind")
    if kind not in _PULSE_KEYS:
        errors.append(f"{where}: kind must be GAUSSIAN or TABULATED")
        return None
    keys = _PULSE_KEYS[kind]
    _check_keys(obj, keys, (), where, errors)
    n0 = len(errors)
    if kind == "GAUSSIAN":
        for k in ("amplitude", "width", "center"):
            if k in obj and not _is_number(obj[k]):
                errors.append(f"{where}: {k} must be a finite number")
        if _is_number(obj.get("amplitude")) and obj["amplitude"] < 0:
            errors.append(f"{where}: amplitude must be ≥ 0")
        if _is_number(obj.get("width")) and obj["width"] <= 0:
            errors.append(f"{where}: width must be > 0")
        if len(errors) > n0 or any(k not in obj for k in keys):
            return None
        return PulseEnvelope.gaussian(obj["amplitude"], obj["width"], obj["center"])
    samples = obj.get("samples")
    if not isinstance(samples, list) or len(samples) < 2 or not all(
            isinstance(s, list) and len(s) == 2 and all(_is_number(v) for v in s) for s in samples):
        errors.append(f"{where}: samples must be a list of at least two [tau, value] pairs")
        return None
    try:
        return PulseEnvelope.tabulated([s[0] for s in samples], [s[1] for s in samples])
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None


def config_from_dict(doc) -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["document must be a JSON object"])
    _check_keys(doc, _TOP_REQUIRED, _TOP_OPTIONAL, "config", errors)
    exp = doc.get("experiment")
    if "experiment" in doc and exp not in EXPERIMENTS:
        errors.append(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    scheme = None
    if "scheme" in doc:
        try:
            scheme = SchemeKind(doc["scheme"])
        except ValueError:
            errors.append("scheme must be M_TYPE or EXTENDED_LAMBDA")
    pulses: list = []
    if "pulses" in doc:
        if not isinstance(doc["pulses"], list) or len(doc["pulses"]) != 4:
            errors.append("pulses must be a list of four pulse objects")
        if isinstance(doc["pulses"], list):
            pulses = [_parse_pulse(p, i, errors) for i, p in enumerate(doc["pulses"])]
    det = doc.get("detunings")
    if "detunings" in doc and (not isinstance(det, list) or len(det) != 4 or not all(_is_number(v) for v in det)):
        errors.append("detunings must be a list of four finite numbers")
    grid = doc.get("grid")
    if "grid" in doc:
        if not isinstance(grid, dict):
            errors.append("grid must be an object")
        else:
            _check_keys(grid, _GRID_REQUIRED, _GRID_OPTIONAL, "grid", errors)
            for k, v in grid.items():
                if k in _GRID_REQUIRED + _GRID_OPTIONAL and not _is_number(v):
                    errors.append(f"grid: {k} must be a finite number")
            if all(_is_number(grid.get(k)) for k in _GRID_REQUIRED):
                if not grid["tau_min"] < grid["tau_max"]:
                    errors.append("grid: tau_min must be < tau_max")
                if int(grid["n_tau"]) != grid["n_tau"] or grid["n_tau"] < 2:
                    errors.append("grid: n_tau must be an integer ≥ 2")
            if _is_number(grid.get("n_x")) and (int(grid["n_x"]) != grid["n_x"] or grid["n_x"] < 1):
                errors.append("grid: n_x must be an integer ≥ 1")
            if _is_number(grid.get("x_max")) and grid["x_max"] < 0:
                errors.append("grid: x_max must be ≥ 0")
    medium_q = None
    if "medium" in doc:
        m = doc["medium"]
        if not isinstance(m, dict):
            errors.append("medium must be an object")
        else:
            _check_keys(m, ("q",), (), "medium", errors)
            q = m.get("q")
            if _is_number(q):
                q = [q] * 4
            if not isinstance(q, list) or len(q) != 4 or not all(_is_number(v) for v in q):
                errors.append("medium: q must be a number or a list of four numbers")
            elif any(v <= 0 for v in q):
                errors.append("medium: q must be > 0")
            else:
                medium_q = tuple(float(v) for v in q)
    thresholds = doc.get("thresholds", {})
    if not isinstance(thresholds, dict):
        errors.append("thresholds must be an object")
        thresholds = {}
    else:
        for k, v in thresholds.items():
            if k not in _THRESHOLD_KEYS:
                errors.append(f"thresholds: unknown key '{k}'")
            elif not _is_number(v) or v <= 0:
                errors.append(f"thresholds: {k} must be > 0")
    T = doc.get("T")
    if T is not None and (not _is_number(T) or T <= 0):
        errors.append("T must be > 0")
    x_unit = doc.get("x_unit", "absolute")
    if x_unit not in X_UNITS:
        errors.append(f"x_unit must be one of {', '.join(X_UNITS)}")
    x_report = doc.get("x_report", [])
    if not isinstance(x_report, list) or not all(_is_number(v) and v >= 0 for v in x_report):
        errors.append("x_report must be a list of depths ≥ 0")
        x_report = []
    checks = doc.get("checks", {})
    if not isinstance(checks, dict) or not all(
            isinstance(k, str) and (k.endswith("_min") or k.endswith("_max")) and _is_number(v)
            for k, v in checks.items()):
        errors.append("checks must map '<metric>_min' or '<metric>_max' names to numbers")
        checks = {}
    for key in ("name", "description", "output"):
        if key in doc and not isinstance(doc[key], str):
            errors.append(f"{key} must be a string")
    seed = doc.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        errors.append("seed must be an integer")
    if exp in ("propagate", "store", "double-store") and "medium" not in doc:
        errors.append(f"experiment '{exp}' needs a 'medium' object")
    if exp == "double-store" and scheme is SchemeKind.EXTENDED_LAMBDA:
        errors.append("double-store is defined for the M_TYPE scheme only")
    if exp == "check-adiabatic" and "medium" in doc and "grid" in doc and isinstance(grid, dict) \
            and "x_max" not in grid:
        errors.append("grid: x_max is required to check the medium margins")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        experiment=exp,
        scheme=scheme,
        pulses=tuple(pulses),
        detunings=tuple(float(v) for v in det),
        grid={k: grid[k] for k in grid},
        name=doc.get("name", ""),
        description=doc.get("description", ""),
        medium_q=medium_q,
        thresholds=dict(thresholds),
        T=None if T is None else float(T),
        x_unit=x_unit,
        x_report=tuple(float(v) for v in x_report),
        checks=dict(checks),
        output=doc.get("output"),
        seed=seed,
    )


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario; raises ConfigError listing every problem."""
    if not text.strip():
        raise ConfigError([f"config: missing required key '{k}'" for k in _TOP_REQUIRED])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from None
    return config_from_dict(doc)


# --- canonical serialization -------------------------------------------------

def _format_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    s = format(v, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def canonical_json(obj, indent: int = 2, float_format=_format_float, _level: int = 0) -> str:
    """JSON with sorted keys and a fixed float format."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: "
                 f"{canonical_json(obj[k], indent, float_format, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(canonical_json(v, indent, float_format, _level + 1) for v in obj) + "]"
        items = [pad + canonical_json(v, indent, float_format, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return float_format(float(obj))
    return json.dumps(str(obj), ensure_ascii=False)


def dump_config(cfg: ScenarioConfig) -> str:
    return canonical_json(cfg.to_dict()) + "\n"


def _repr_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return repr(float(v))


def dump_summary(obj) -> str:
    """Summaries use the shortest round-trip float representation."""
    return canonical_json(obj, float_format=_repr_float) + "\n"


def bundled_scenarios() -> list[str]:
    root = resources.files("pentapulse") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> str:
    return (resources.files("pentapulse") / "scenarios" / f"{name}.json").read_text(encoding="utf-8")


def read_config_text(ref: str) -> str:
    """Config text from a file path or a bundled scenario name."""
    p = Path(ref)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if name in bundled_scenarios():
        return load_bundled(name)
    raise FileNotFoundError(ref)


# --- execution ----------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return _repr_float(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    cols = [np.asarray(c) for c in columns]
    for row in zip(*cols):
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def evaluate_checks(metrics: dict, checks: dict) -> dict:
    out = {}
    for name, threshold in sorted(checks.items()):
        metric, kind = name.rsplit("_", 1)
        value = metrics.get(metric)
        if value is None or (isinstance(value, float) and math.isnan(value)):
            ok = False
        else:
            ok = value >= threshold if kind == "min" else value <= threshold
        out[name] = {"metric": metric, "value": value, "threshold": threshold, "pass": bool(ok)}
    return out


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    files: list[str]
    errors: list[str] = field(default_factory=list)


def _adiabatic_report(cfg: ScenarioConfig, pulses: PulseSet, grid: Grid) -> dict:
    thr = cfg.thresholds.get("adiabatic", 10.0)
    rep = single_atom_margins(pulses, T=cfg.T, threshold=thr, grid=grid).to_dict()
    out = {"single_atom": rep}
    if cfg.medium_q is not None and grid.x_max > 0:
        T = cfg.T if cfg.T is not None else pulses.shortest_fwhm()
        omega2 = float(np.max(pulses.rabi(grid.tau)[:, 1:3] ** 2 @ np.ones(2)))
        med = medium_margins(cfg.medium.q[1], grid.x_max, pulses.multiphoton_detunings[0], T, omega2,
                             small=cfg.thresholds.get("medium_small", 0.1))
        out["medium"] = med.to_dict()
    return out


def _slice_columns(fm: FieldMap, i: int) -> tuple[list[str], list[np.ndarray]]:
    F = fm.fields[i]
    B = fm.amplitudes[i]
    P = np.abs(B) ** 2
    r51 = B[:, 4] * np.conj(B[:, 0])
    r31 = B[:, 2] * np.conj(B[:, 0])
    header = ["tau"] + [f"abs_omega{k}" for k in range(1, 5)] + [f"phase_omega{k}" for k in range(1, 5)] \
        + [f"P{k}" for k in range(1, 6)] + ["re_rho51", "im_rho51", "re_rho31", "im_rho31"]
    cols = [fm.tau] + [np.abs(F[:, k]) for k in range(4)] + [np.angle(F[:, k]) for k in range(4)] \
        + [P[:, k] for k in range(5)] + [r51.real, r51.imag, r31.real, r31.imag]
    return header, cols


def _run_eigen(cfg, pulses, grid, out: Path):
    track = track_eigenvectors(pulses, grid)
    w, _ = jacobi_eigh(build_hamiltonian(pulses, grid.tau))
    scale = np.maximum(np.abs(w).max(axis=1), 1e-300)
    err = float(np.max(np.abs(np.sort(track.values, axis=1) - w).max(axis=1) / scale))
    header = ["tau"] + [f"lambda{k}" for k in range(5)]
    cols = [grid.tau] + [track.values[:, k] for k in range(5)]
    if track.angles is not None:
        a = track.angles
        header += ["theta", "phi1", "phi2", "phi"]
        cols += [a.theta, a.phi1, a.phi2, a.phi]
    for k in range(5):
        for i in range(5):
            header.append(f"v{k}_{i + 1}")
            cols.append(track.vectors[:, i, k].real)
    write_csv(out / "eigen.csv", header, cols)
    delta = pulses.multiphoton_detunings[0]
    ends = np.sort(track.values[[0, -1]], axis=1)
    expected = np.sort(np.array([0.0, 0.0, 0.0, delta, delta]))
    metrics = {
        "max_rel_eig_error": err,
        "endpoint_error": float(np.max(np.abs(ends - expected))),
        "trace_identity_error": float(np.max(np.abs(track.values.sum(axis=1) - 2 * delta))),
        "lambda0_max_abs": float(np.max(np.abs(track.values[:, 0]))),
    }
    conv = {"kind": "analytic-vs-numeric", "value": err}
    return metrics, conv, ["eigen.csv"], {}


def _run_transfer(cfg, pulses, grid, out: Path, backward: bool):
    start, target, which = (5, 1, "lambda2") if backward else (1, 5, "lambda1")
    traj = integrate_tdse(pulses, AtomState.bare(start), grid)
    ov = project_onto_dressed(traj, pulses, which)
    P = traj.populations
    r51 = traj.coherence(5, 1)
    r31 = traj.coherence(3, 1)
    header = ["tau"] + [f"P{k}" for k in range(1, 6)] + ["re_rho51", "im_rho51", "re_rho31", "im_rho31",
                                                         f"overlap_{which}"]
    cols = [traj.tau] + [P[:, k] for k in range(5)] + [r51.real, r51.imag, r31.real, r31.imag, ov]
    write_csv(out / "transfer.csv", header, cols)
    fine = Grid(grid.tau_min, grid.tau_max, 2 * grid.n_tau - 1)
    traj2 = integrate_tdse(pulses, AtomState.bare(start), fine)
    conv = {"kind": "final-population-change-on-halving-dtau",
            "value": float(np.max(np.abs(traj2.populations[-1] - P[-1])))}
    metrics = {
        "fidelity": float(P[-1, target - 1]),
        "max_P2": float(P[:, 1].max()),
        "max_P3": float(P[:, 2].max()),
        "max_P4": float(P[:, 3].max()),
        "norm_drift": traj.norm_drift,
        f"min_overlap_{which}": float(ov.min()),
    }
    return metrics, conv, ["transfer.csv"], {}


def _exit_change(cfg, pulses, grid, fields_exit: np.ndarray) -> dict:
    if grid.n_x < 2:
        return {"kind": "none", "value": None}
    coarse = Grid(grid.tau_min, grid.tau_max, grid.n_tau, grid.x_max, max(1, grid.n_x // 2))
    other = propagate(pulses, cfg.medium, coarse).fields[-1]
    est = float(np.linalg.norm(fields_exit - other) / 3.0 / max(np.linalg.norm(fields_exit), 1e-300))
    return {"kind": "richardson-estimate-from-half-n_x", "value": est}


def _run_propagate(cfg, pulses, grid, out: Path):
    fm = propagate(pulses, cfg.medium, grid)
    depths = cfg.report_depths() or [grid.x_max]
    files = []
    metrics: dict = {"conservation_residual": conservation_residual(fm)}
    L = scaled_length(pulses, cfg.medium.q[1])
    for n, x in enumerate(depths, start=1):
        i = fm.slice_index(x)
        header, cols = _slice_columns(fm, i)
        name = f"slice_{n}.csv"
        write_csv(out / name, header, cols)
        files.append(name)
        d, c = probe_delay(fm, pulses, x)
        metrics[f"x{n}"] = float(fm.x[i])
        metrics[f"x{n}_over_L"] = float(fm.x[i] / L)
        metrics[f"delay_x{n}"] = d
        metrics[f"correlation_x{n}"] = c
    diag = fm.diagnostics
    metrics["max_balance_residual"] = float(max(diag["balance_residual"]))
    metrics["norm_drift"] = diag["norm_drift"]
    conv = _exit_change(cfg, pulses, grid, fm.fields[-1])
    return metrics, conv, files, {"diagnostics": diag}


def _read_controls(pulses: PulseSet, probe_index: int) -> PulseSet:
    return pulses.with_envelope(probe_index, PulseEnvelope.off())


def _run_store(cfg, pulses, grid, out: Path):
    rec = write_pulse(pulses, cfg.medium, grid)
    write_csv(out / "storage.csv",
              ["x", "re_rho51", "im_rho51", "re_rho31", "im_rho31", "xi", "predicted_rho51", "transmitted"],
              [rec.x, rec.rho51.real, rec.rho51.imag, rec.rho31.real, rec.rho31.imag, rec.xi,
               rec.predicted_rho51, rec.transmitted])
    res = retrieve(rec.states, _read_controls(pulses, 1), cfg.medium, grid, pulses.envelopes[1], FIVE_LEVEL)
    write_csv(out / "retrieved.csv", ["tau", "re_omega2", "im_omega2", "abs_omega2"],
              [res.tau, res.output.real, res.output.imag, np.abs(res.output)])
    input_energy = float(np.trapezoid(pulses.envelopes[1](grid.tau) ** 2, grid.tau))
    metrics = dict(rec.summary())
    metrics["q_x_max"] = rec.x_max * cfg.medium.q[1]
    metrics["retrieval_correlation"] = res.correlation
    metrics["retrieval_delay"] = res.delay
    metrics["retrieved_energy_fraction"] = res.energy / input_energy if input_energy > 0 else 0.0
    conv = _exit_change(cfg, pulses, grid, rec.fieldmap.fields[-1])
    return metrics, conv, ["storage.csv", "retrieved.csv"], {}


def double_schedule_from(pulses: PulseSet) -> DoubleStorageSchedule:
    """Derive the full protocol from the first-write pulse set: the 1-2-3 write
    reuses the probe shape on transition 1 and the Omega_3 control shape on
    transition 2."""
    e = pulses.envelopes
    off = PulseEnvelope.off()
    write2 = PulseSet((e[1], e[2], off, off), pulses.detunings, pulses.scheme)
    return DoubleStorageSchedule(
        write1=pulses,
        write2=write2,
        read1=_read_controls(pulses, 1),
        read2=PulseSet((off, e[2], off, off), pulses.detunings, pulses.scheme),
        probe1=e[1],
        probe2=e[1],
    )


def _run_double(cfg, pulses, grid, out: Path):
    sched = double_schedule_from(pulses)
    res = double_storage_protocol(sched, cfg.medium, grid)
    r1 = res.record1
    write_csv(out / "storage.csv",
              ["x", "re_rho51_write1", "im_rho51_write1", "re_rho31_write1", "im_rho31_write1",
               "re_rho51_write2", "im_rho51_write2", "re_rho31_write2", "im_rho31_write2"],
              [r1.x, r1.rho51.real, r1.rho51.imag, r1.rho31.real, r1.rho31.imag,
               res.rho51_after_write2.real, res.rho51_after_write2.imag,
               res.rho31_after_write2.real, res.rho31_after_write2.imag])
    files = ["storage.csv"]
    metrics: dict = {
        "write1_max_rho31": r1.max_rho31,
        "write1_min_p1": r1.min_p1_pulses_off,
        "write2_max_rho51": float(np.max(np.abs(res.rho51_after_write2))),
        "write2_max_rho31": float(np.max(np.abs(res.rho31_after_write2))),
    }
    corrs, xts = [], []
    for n, (key, results) in enumerate(sorted(res.retrievals.items()), start=1):
        for m, r in enumerate(results, start=1):
            name = f"retrieved_order{n}_step{m}.csv"
            write_csv(out / name, ["tau", "re_output", "im_output", "abs_output"],
                      [r.tau, r.output.real, r.output.imag, np.abs(r.output)])
            files.append(name)
            corrs.append(r.correlation)
        xts += res.crosstalk[key]
    metrics["min_retrieval_correlation"] = float(min(corrs))
    metrics["max_crosstalk"] = float(max(xts))
    conv = _exit_change(cfg, pulses, grid, r1.fieldmap.fields[-1])
    return metrics, conv, files, {"protocol": res.summary()}


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path) -> RunResult:
    """Run ``cfg`` and write its artifacts into ``out_dir``.

    Exit codes: 0 success, 2 regime or adiabaticity refusal, 3 numerical
    failure.  Embedded checks are evaluated and reported but do not change the
    exit code.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pulses = cfg.pulse_set
    summary: dict = {"name": cfg.name, "experiment": cfg.experiment, "scheme": cfg.scheme.value}
    try:
        grid = cfg.make_grid()
        if cfg.experiment != "eigen" and cfg.experiment != "check-adiabatic":
            grid.check_support(pulses)
        summary["adiabaticity"] = _adiabatic_report(cfg, pulses, grid)
        extra: dict = {}
        if cfg.experiment == "check-adiabatic":
            single = summary["adiabaticity"]["single_atom"]
            ok = single["verdict"] == Verdict.ADIABATIC.value
            if "medium" in summary["adiabaticity"]:
                ok = ok and summary["adiabaticity"]["medium"]["verdict"] == Verdict.ADIABATIC.value
            metrics = {"adiabatic": 1.0 if ok else 0.0}
            conv: dict = {"kind": "none", "value": None}
            files: list[str] = []
            code = EXIT_OK if ok else EXIT_REFUSED
        else:
            runner = {
                "eigen": _run_eigen,
                "transfer": lambda c, p, g, o: _run_transfer(c, p, g, o, False),
                "btransfer": lambda c, p, g, o: _run_transfer(c, p, g, o, True),
                "propagate": _run_propagate,
                "store": _run_store,
                "double-store": _run_double,
            }[cfg.experiment]
            metrics, conv, files, extra = runner(cfg, pulses, grid, out)
            code = EXIT_OK
    except (StepSizeError, RegimeError, DegenerateCrossing, ValueError) as exc:
        summary["error"] = str(exc)
        if isinstance(exc, StepSizeError):
            summary["required_n_tau"] = exc.required_n_tau
        (out / "summary.json").write_text(dump_summary(summary), encoding="utf-8")
        return RunResult(EXIT_REFUSED, summary, ["summary.json"], [str(exc)])
    except (PropagationError, FloatingPointError) as exc:
        summary["error"] = str(exc)
        summary["slice_index"] = getattr(exc, "slice_index", None)
        summary["tau"] = getattr(exc, "tau", None)
        (out / "summary.json").write_text(dump_summary(summary), encoding="utf-8")
        return RunResult(EXIT_NUMERICAL, summary, ["summary.json"], [str(exc)])
    summary["metrics"] = metrics
    summary["grid_convergence"] = conv
    summary.update(extra)
    # embedded checks refer to experiment metrics; a margin check has none
    checks = evaluate_checks(metrics, cfg.checks) if cfg.experiment != "check-adiabatic" else {}
    summary["checks"] = checks
    summary["checks_passed"] = all(c["pass"] for c in checks.values())
    (out / "summary.json").write_text(dump_summary(summary), encoding="utf-8")
    return RunResult(code, summary, files + ["summary.json"])


def resonant_config_detunings(scheme: SchemeKind, delta: float) -> list[float]:
    return list(resonant_detunings(scheme, delta))
