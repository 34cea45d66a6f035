"""End-to-end reproduction: synthetic data, both Landweber variants, CSV/field/summary output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import fem
from .geometry import GeometrySpec, Rect, Region, rects_from_lists
from .inversion import History, InversionConfig, IterationRecord, Problem, add_noise, run_bilevel, run_direct
from .mesh import Field, Mesh, generate_mesh, mesh_size, write_field, write_mesh
from .operators import HelmholtzOperator

log = logging.getLogger(__name__)

DEFAULT_MU = 0.075
# lets the bi-level run reach h = 0.0625 but never go below the direct mesh resolution
DEFAULT_H_MIN = 0.06

CSV_HEADER = ["j", "residual", "error", "t_total", "t_refine", "t_step", "t_residual", "mesh_id", "h"]


class ConfigError(ValueError):
    pass


def true_source(x1, x2):
    """Radially oscillating bump supported in the disk of radius 1/2."""
    r2 = np.asarray(x1) ** 2 + np.asarray(x2) ** 2
    return np.sqrt(np.maximum(0.25 - r2, 0.0)) * np.cos(2 * np.pi * np.sqrt(r2))


@dataclass
class ExperimentConfig:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    inversion: InversionConfig = field(default_factory=lambda: InversionConfig(mu=DEFAULT_MU, h_min=DEFAULT_H_MIN))
    data_mesh_h: float = 0.046
    direct_mesh_h: float = 0.064
    output_directory: str = "results"
    emit_fields: bool = False
    serial: bool = True

    def __post_init__(self):
        if not (self.data_mesh_h < self.direct_mesh_h < self.inversion.h0):
            raise ConfigError("mesh sizes must satisfy data_mesh_h < direct_mesh_h < h0")


_SECTIONS = {
    "geometry": {f.name for f in dataclasses.fields(GeometrySpec)},
    "inversion": {f.name for f in dataclasses.fields(InversionConfig)},
    "experiment": {"data_mesh_h", "direct_mesh_h", "output_directory", "emit_fields", "serial"},
}


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    """Build a config from nested ``{section: {key: value}}`` data.

    ``overrides`` use dotted keys, e.g. ``{"inversion.noise_level": 0.1}``.
    Unknown sections or keys raise :class:`ConfigError`.
    """
    merged = {s: dict(raw.get(s, {})) for s in _SECTIONS}
    extra = set(raw) - set(_SECTIONS)
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    for dotted, value in overrides.items():
        section, key = dotted.split(".", 1)
        merged[section][key] = value
    for section, values in merged.items():
        unknown = set(values) - _SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    geo = merged["geometry"]
    for key in ("room", "source_region", "buffer_region"):
        if key in geo and geo[key] is not None:
            geo[key] = Rect(*map(float, geo[key]))
    if "scatterers" in geo:
        geo["scatterers"] = rects_from_lists(geo["scatterers"])
    inv = merged["inversion"]
    if isinstance(inv.get("mu"), str):
        if inv["mu"].lower() != "auto":
            raise ConfigError("inversion.mu must be a number or 'auto'")
        inv["mu"] = None
    try:
        geometry = GeometrySpec(**geo)
        inversion = InversionConfig(**{"mu": DEFAULT_MU, "h_min": DEFAULT_H_MIN, **inv})
        return ExperimentConfig(geometry=geometry, inversion=inversion, **merged["experiment"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str | Path] = None, **overrides) -> ExperimentConfig:
    """Read a TOML file of dotted keys (``inversion.tau = 1.3``); ``None`` gives defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw, **overrides)


@dataclass
class SyntheticData:
    mesh: Mesh
    phi_true: Field
    u: Field
    y_delta: Field
    delta: float

    def problem(self, k: float) -> Problem:
        return Problem(k=k, y_delta=self.y_delta, delta=self.delta, true_source=true_source)


def synthesize_data(config: ExperimentConfig) -> SyntheticData:
    """Fine-mesh forward solve of the true source, plus scaled complex white noise."""
    mesh = generate_mesh(config.geometry, config.data_mesh_h)
    phi = Field.interpolate(mesh, true_source, Region.SOURCE)
    u = HelmholtzOperator(mesh, config.geometry.wave_number).forward(phi)
    level = config.inversion.noise_level
    if level == 0:
        return SyntheticData(mesh, phi, u, u, 0.0)
    y_delta, delta = add_noise(u, level, config.inversion.seed)
    return SyntheticData(mesh, phi, u, y_delta, delta)


def write_history_csv(history: History, path) -> Path:
    if not history.records:
        raise ValueError("empty history")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in history.records:
            w.writerow([r.j, f"{r.residual:.17g}", f"{r.error:.17g}", f"{r.t_total:.6f}",
                        f"{r.t_refine:.6f}", f"{r.t_step:.6f}", f"{r.t_residual:.6f}",
                        r.mesh_id, f"{r.h:.17g}"])
    return path


def read_history_csv(path) -> list[IterationRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [IterationRecord(int(r["j"]), float(r["residual"]), float(r["error"]), float(r["t_refine"]),
                            float(r["t_step"]), float(r["t_residual"]), int(r["mesh_id"]), float(r["h"]))
            for r in rows]


def _method_summary(h: History) -> dict:
    last = h.final
    return {
        "stop_reason": h.stop_reason.value,
        "iterations": last.j,
        "final_residual": last.residual,
        "tau_delta": h.tau * h.delta,
        "final_error": last.error,
        "total_time": h.total_time,
        "mu": h.mu,
        "final_h": last.h,
        "refinement_count": h.n_refinements,
        "mesh_sizes": [h.records[0].h] + [e.h_new for e in h.refinement_events],
    }


def _dump_fields(out: Path, data: SyntheticData, bil: History, dire: History):
    write_mesh(data.mesh, out / "mesh_data.txt")
    write_field(data.phi_true, out / "field_true_data.txt", "data")
    for phi in bil.level_iterates:
        mid = str(phi.mesh_id)
        write_mesh(phi.mesh, out / f"mesh_{mid}.txt")
        write_field(phi, out / f"field_bilevel_{mid}.txt", mid)
    for name, hist, mid in (("bilevel", bil, str(bil.final_phi.mesh_id)), ("direct", dire, "direct")):
        phi = hist.final_phi
        if mid == "direct":
            write_mesh(phi.mesh, out / "mesh_direct.txt")
            write_field(phi, out / "field_direct_direct.txt", mid)
        err = Field(phi.mesh, np.abs(phi.values - Field.interpolate(phi.mesh, true_source, Region.SOURCE).values),
                    Region.SOURCE)
        write_field(err, out / f"field_{name}-error_{mid}.txt", mid)


def run_experiment(config: ExperimentConfig, write: bool = True) -> dict:
    """Synthesize data, run bi-level and direct Landweber, write outputs; returns the summary."""
    t0 = time.perf_counter()
    data = synthesize_data(config)
    k = config.geometry.wave_number
    problem = data.problem(k)
    initial = generate_mesh(config.geometry, config.inversion.h0)
    direct_mesh = generate_mesh(config.geometry, config.direct_mesh_h)
    log.info("data mesh %s, delta=%.4g; initial %s; direct %s", data.mesh, data.delta, initial, direct_mesh)

    jobs = (lambda: run_bilevel(problem, config.inversion, initial),
            lambda: run_direct(problem, config.inversion, direct_mesh))
    if config.serial:
        bil, dire = (job() for job in jobs)
    else:
        with ThreadPoolExecutor(max_workers=2) as pool:
            bil, dire = (f.result() for f in [pool.submit(job) for job in jobs])

    summary = {
        "noise_level": config.inversion.noise_level,
        "seed": config.inversion.seed,
        "wave_number": k,
        "delta": data.delta,
        "data_norm": fem.norm(data.u, Region.MEASUREMENT),
        "data_mesh_h": mesh_size(data.mesh),
        "data_mesh_vertices": data.mesh.n_vertices,
        "direct_mesh_h": mesh_size(direct_mesh),
        "direct_mesh_vertices": direct_mesh.n_vertices,
        "bilevel": _method_summary(bil),
        "direct": _method_summary(dire),
        "wall_time": time.perf_counter() - t0,
    }
    if write:
        out = Path(config.output_directory)
        out.mkdir(parents=True, exist_ok=True)
        write_history_csv(bil, out / "bilevel.csv")
        write_history_csv(dire, out / "direct.csv")
        write_summary(summary, out / "summary.txt")
        if config.emit_fields:
            _dump_fields(out, data, bil, dire)
    summary["histories"] = {"bilevel": bil, "direct": dire}
    return summary


def write_summary(summary: dict, path) -> Path:
    lines = []
    for key, value in summary.items():
        if isinstance(value, dict):
            lines += [f"{key}.{k} = {_fmt(v)}" for k, v in value.items()]
        elif key != "histories":
            lines.append(f"{key} = {_fmt(value)}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, list):
        return " ".join(_fmt(x) for x in v)
    return str(v)
