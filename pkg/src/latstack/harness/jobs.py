"""Configuration-driven experiment jobs with versioned CSV/JSON artifacts.

A job is one validated JobConfig: a stack template plus sweep axes, a
backend selection, and output settings.  Running it executes the sweep
(parallel across grid points), writes one CSV per backend and a JSON
manifest (config echo, job hash, per-point runtimes, failures), and is
idempotent: identical configs with existing outputs are a no-op unless
forced.  Bundled named jobs pin the standard desk-scale protocols.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import __version__
from ..dipole import _map_point, find_resonance, BeamSpec
from ..interface import (
    branch_for,
    design_multilayer_shifts,
    multilayer_params,
    multiorder_scan,
    resonant_lattice_constant,
    two_shell_window,
)
from ..lattice import StackSpec, lattice_angle, two_layer
from ..rays import finite_ray_reflectivity, scaling_fit
from . import io
from .sweep import sweep_grid

KINDS = ("map", "scaling", "scan", "design", "ray", "resonance")
_BACKENDS_FOR_KIND = {
    "map": ("dipole", "analytic", "all"),
    "scaling": ("dipole", "ray", "all"),
    "scan": ("analytic",),
    "design": ("analytic",),
    "ray": ("ray",),
    "resonance": ("dipole",),
}
# runtime-only settings excluded from the job hash
_NON_SCIENCE_FIELDS = ("out_dir", "jobs", "force")


class ConfigError(ValueError):
    """Invalid or incomplete job configuration."""


@dataclass(frozen=True)
class JobConfig:
    kind: str
    name: str = ""
    backend: str = ""
    lattice: str = "square"
    shifted: bool = False
    n_side: int = 16
    n_z: int = 2
    a: float | None = None
    a_z: float | None = None
    resonance_n: int | None = None
    a_axis: tuple = ()
    a_z_axis: tuple = ()
    n_axis: tuple = ()
    w_axis: tuple = ()
    w_rule: tuple = ("wol", 0.3)
    a_z_search_max: float = 10.0
    int_tol: float = 5e-3
    n_fit_min: float | None = None
    delta_window: tuple | None = None
    out_dir: str = "."
    jobs: int = 1
    force: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown job kind {self.kind!r}")
        backend = self.backend or _BACKENDS_FOR_KIND[self.kind][0]
        object.__setattr__(self, "backend", backend)
        if backend not in _BACKENDS_FOR_KIND[self.kind]:
            raise ConfigError(f"backend {backend!r} invalid for kind {self.kind!r}")
        object.__setattr__(self, "name", self.name or self.kind)
        if self.kind in ("map", "scan"):
            if not self.a_axis or not self.a_z_axis:
                raise ConfigError(f"{self.kind} job needs non-empty a and a_z axes")
        if self.kind in ("scaling", "ray"):
            if not self.n_axis and not self.w_axis:
                raise ConfigError(f"{self.kind} job needs an N or w sweep axis")
            for n in self.n_axis:
                _n_side_of(int(n))
            self._effective_a()
        if self.kind == "design" and len(self.a_axis) < 2:
            raise ConfigError("design job needs a_axis = (a_min, a_max)")
        if self.kind == "resonance":
            self._effective_a()

    def _effective_a(self) -> float:
        if self.a_z is None:
            raise ConfigError(f"{self.kind} job needs a_z")
        if self.resonance_n is not None:
            return resonant_lattice_constant(
                self.lattice, branch_for(self.lattice, self.shifted),
                self.resonance_n, self.a_z)
        if self.a is None:
            raise ConfigError(f"{self.kind} job needs a or resonance_n")
        return self.a

    def science_dict(self) -> dict:
        d = asdict(self)
        for key in _NON_SCIENCE_FIELDS:
            d.pop(key)
        return d

    @property
    def hash(self) -> str:
        return io.job_hash(self.science_dict())


def _values(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _axis(mapping: dict, stem: str) -> tuple:
    if f"{stem}_values" in mapping:
        return _values(mapping[f"{stem}_values"])
    if f"{stem}_min" in mapping:
        lo = float(mapping[f"{stem}_min"])
        hi = float(mapping[f"{stem}_max"])
        count = int(mapping.get(f"{stem}_count", 25))
        return tuple(np.linspace(lo, hi, count))
    return ()


def config_from_mapping(kind: str, mapping: dict, **overrides) -> JobConfig:
    """Build a JobConfig from flat string key-value pairs (config file)."""
    kw: dict = {"kind": kind}
    simple = {"name": str, "backend": str, "lattice": str, "n_side": int,
              "n_z": int, "a": float, "a_z": float, "resonance_n": int,
              "a_z_search_max": float, "int_tol": float, "n_fit_min": float,
              "out_dir": str, "jobs": int}
    for key, cast in simple.items():
        if key in mapping:
            kw[key] = cast(mapping[key])
    if "shifted" in mapping:
        kw["shifted"] = mapping["shifted"].lower() in ("1", "true", "yes")
    if "force" in mapping:
        kw["force"] = mapping["force"].lower() in ("1", "true", "yes")
    for stem, field_name in (("a", "a_axis"), ("a_z", "a_z_axis"),
                             ("w", "w_axis")):
        axis = _axis(mapping, stem)
        if axis:
            kw[field_name] = axis
    if "n_values" in mapping:
        kw["n_axis"] = tuple(int(float(v)) for v in mapping["n_values"].split(",")
                             if v.strip())
    if "w_rule" in mapping:
        kind_w, _, val = mapping["w_rule"].partition(":")
        kw["w_rule"] = (kind_w.strip(), float(val))
    if "delta_min" in mapping and "delta_max" in mapping:
        kw["delta_window"] = (float(mapping["delta_min"]),
                              float(mapping["delta_max"]))
    kw.update(overrides)
    return JobConfig(**kw)


# ---------------------------------------------------------------------------
# backend runners


def _n_side_of(n_atoms: int) -> int:
    side = int(round(math.sqrt(n_atoms)))
    if side * side != n_atoms:
        raise ConfigError(f"N = {n_atoms} is not a square layer count")
    return side


def _scaling_points(config: JobConfig) -> list:
    a = config._effective_a()
    n_axis = config.n_axis or (config.n_side ** 2,)
    w_axis = config.w_axis or (config.w_rule[1] if config.w_rule[0] == "wol"
                               else config.w_rule[1],)
    return [(config.lattice, config.shifted, a, config.a_z,
             _n_side_of(int(n)), config.w_rule[0], float(w),
             config.delta_window)
            for n in n_axis for w in w_axis]


def _scaling_dipole_worker(point):
    lattice, shifted, a, a_z, n_side, w_kind, w_val, window = point
    spec = two_layer(lattice, a_z, a, n_side, shifted=shifted)
    waist = w_val * spec.linear_size if w_kind == "wol" else w_val
    delta_star, res = find_resonance(spec, BeamSpec(waist=waist), window)
    return [n_side * n_side, w_val, delta_star, res.r0, 1.0 - res.r0,
            res.t2, res.solve_residual]


def _scaling_ray_worker(point):
    lattice, shifted, a, a_z, n_side, w_kind, w_val, _window = point
    spec = two_layer(lattice, a_z, a, n_side, shifted=shifted)
    waist = w_val * spec.linear_size if w_kind == "wol" else w_val
    r0, grid = finite_ray_reflectivity(spec, w=waist)
    return [n_side * n_side, w_val, 1.0 - r0, grid.M]


_DIPOLE_SCALING_COLUMNS = ("n", "w", "delta_star", "r0", "one_minus_r0",
                           "t2", "residual")
_RAY_SCALING_COLUMNS = ("n", "w", "one_minus_r0_ray", "m_points")
_MAP_COLUMNS = ("a_z", "a", "delta_star", "r0", "t2", "residual")


def _run_map(config: JobConfig, manifest: dict) -> dict:
    outputs = {}
    if config.backend in ("dipole", "all"):
        points = [(config.lattice, config.shifted, float(a), float(az),
                   config.n_side, config.w_rule, config.delta_window, 2)
                  for az in config.a_z_axis for a in config.a_axis]
        res = sweep_grid(points, _map_point, config.jobs)
        manifest["point_seconds"] = [round(s, 6) for s in res.seconds]
        manifest["failures"] += [
            {"index": i, "point": list(points[i][:4]), "error": err}
            for i, err in res.failures]
        outputs["dipole"] = (_MAP_COLUMNS,
                             [r for r in res.results if r is not None])
    if config.backend in ("analytic", "all"):
        table = multiorder_scan(config.lattice, config.shifted,
                                config.a_axis, config.a_z_axis)
        outputs["analytic"] = (table.columns, table.data.tolist())
    return outputs


def _run_scaling(config: JobConfig, manifest: dict) -> dict:
    points = _scaling_points(config)
    outputs = {}
    backends = ("dipole", "ray") if config.backend == "all" else (config.backend,)
    for backend in backends:
        worker = _scaling_dipole_worker if backend == "dipole" else _scaling_ray_worker
        res = sweep_grid(points, worker, config.jobs)
        manifest.setdefault("point_seconds", [])
        manifest["point_seconds"] += [round(s, 6) for s in res.seconds]
        manifest["failures"] += [
            {"index": i, "backend": backend, "error": err}
            for i, err in res.failures]
        columns = (_DIPOLE_SCALING_COLUMNS if backend == "dipole"
                   else _RAY_SCALING_COLUMNS)
        rows = [r for r in res.results if r is not None]
        outputs[backend] = (columns, rows)
        if len(rows) >= 2 and len({r[0] for r in rows}) >= 2:
            ns = [r[0] for r in rows]
            ys = [r[columns.index("one_minus_r0")] if backend == "dipole"
                  else r[columns.index("one_minus_r0_ray")] for r in rows]
            n_min = config.n_fit_min if config.n_fit_min is not None else min(ns)
            try:
                fit = scaling_fit(ns, ys, n_min, min_points=2)
                manifest.setdefault("fits", {})[backend] = {
                    "exponent": fit.exponent, "prefactor": fit.prefactor,
                    "rms_residual": fit.rms_residual, "n_min": fit.n_min,
                    "n_used": fit.n_used}
            except ValueError as exc:
                manifest.setdefault("fits", {})[backend] = {"error": str(exc)}
    return outputs


def _run_scan(config: JobConfig, manifest: dict) -> dict:
    table = multiorder_scan(config.lattice, config.shifted,
                            config.a_axis, config.a_z_axis)
    return {"analytic": (table.columns, table.data.tolist())}


def _run_design(config: JobConfig, manifest: dict) -> dict:
    lattices = (["square", "triangular"] if config.lattice == "both"
                else [config.lattice])
    columns = ("lattice", "a_z", "a", "b0x", "b0y", "b1x", "b1y",
               "b2x", "b2y", "b3x", "b3y", "re_gamma_diff_over_g0",
               "eig_residual")
    rows = []
    for lattice in lattices:
        w_lo, w_hi = two_shell_window(lattice)
        # the configured range is clamped into each lattice's two-shell window
        lo = max(min(config.a_axis), w_lo + 1e-6)
        hi = min(max(config.a_axis), w_hi - 1e-6)
        if not lo < hi:
            lo, hi = w_lo + 1e-6, w_hi - 1e-6
        hits = design_multilayer_shifts(lattice, (lo, hi),
                                        a_z_max=config.a_z_search_max,
                                        int_tol=config.int_tol)
        for a_z, a, shifts in hits:
            spec = StackSpec(lattice_angle(lattice), a, a_z, 1, 4, shifts)
            params, resid = multilayer_params(spec, include_evanescent=False)
            flat = [c for s in shifts for c in s]
            rows.append([lattice, a_z, a, *flat,
                         params.gamma_diff.real / spec.gamma0, resid])
    return {"analytic": (columns, rows)}


def _run_resonance(config: JobConfig, manifest: dict) -> dict:
    a = config._effective_a()
    spec = two_layer(config.lattice, config.a_z, a, config.n_side,
                     shifted=config.shifted) if config.n_z == 2 else StackSpec(
        lattice_angle(config.lattice), a, config.a_z, config.n_side, config.n_z,
        tuple((0.0, 0.0) for _ in range(config.n_z)))
    waist = (config.w_rule[1] * spec.linear_size if config.w_rule[0] == "wol"
             else config.w_rule[1])
    t0 = time.perf_counter()
    delta_star, res = find_resonance(spec, BeamSpec(waist=waist),
                                     config.delta_window)
    manifest["point_seconds"] = [round(time.perf_counter() - t0, 6)]
    return {"dipole": (_MAP_COLUMNS,
                       [[config.a_z, a, delta_star, res.r0, res.t2,
                         res.solve_residual]])}


_RUNNERS = {"map": _run_map, "scaling": _run_scaling, "scan": _run_scan,
            "design": _run_design, "ray": _run_scaling,
            "resonance": _run_resonance}


def run_job(config: JobConfig) -> dict:
    """Execute a job and write its artifacts; returns the manifest dict.

    No-op (returns the stored manifest) when an identical config already
    produced its outputs, unless config.force is set.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    manifest_path = os.path.join(config.out_dir, f"{config.name}_manifest.json")
    existing = io.read_manifest(manifest_path)
    if (existing is not None and not config.force
            and existing.get("hash") == config.hash
            and all(os.path.exists(os.path.join(config.out_dir, f))
                    for f in existing.get("outputs", []))):
        existing["skipped"] = True
        return existing

    manifest = {
        "schema_version": io.MANIFEST_SCHEMA_VERSION,
        "name": config.name,
        "kind": config.kind,
        "hash": config.hash,
        "software_version": __version__,
        "config": io.canonical_config_text(config.science_dict()).splitlines(),
        "failures": [],
        "outputs": [],
        "created_unix": time.time(),
    }
    outputs = _RUNNERS[config.kind](config, manifest)
    for backend, (columns, rows) in outputs.items():
        fname = f"{config.name}_{backend}.csv"
        io.write_csv(os.path.join(config.out_dir, fname), columns, rows)
        manifest["outputs"].append(fname)
    manifest["outputs"].sort()
    io.write_manifest(manifest_path, manifest)
    return manifest


# ---------------------------------------------------------------------------
# bundled desk-scale jobs


def _grid(lo: float, hi: float, count: int) -> tuple:
    return tuple(np.linspace(lo, hi, count))


NAMED_JOBS: dict = {
    # two-layer reflectivity maps over (a_z, a)
    "fig2a": dict(kind="map", backend="dipole", lattice="square", shifted=False,
                  n_side=15, a_axis=_grid(1.05, 1.40, 25),
                  a_z_axis=_grid(1.0, 4.0, 25), w_rule=("wol", 0.3)),
    "fig2b": dict(kind="map", backend="dipole", lattice="square", shifted=True,
                  n_side=15, a_axis=_grid(1.05, 1.40, 25),
                  a_z_axis=_grid(1.0, 4.0, 25), w_rule=("wol", 0.3)),
    "fig2c": dict(kind="map", backend="dipole", lattice="triangular",
                  shifted=False, n_side=15, a_axis=_grid(1.20, 1.90, 25),
                  a_z_axis=_grid(1.0, 4.0, 25), w_rule=("wol", 0.3)),
    # ray-theory inefficiency scaling of the shifted-square resonant stack
    "fig3": dict(kind="ray", backend="ray", lattice="square", shifted=True,
                 a_z=3.0, resonance_n=5, w_rule=("wol", 0.3),
                 n_axis=(1024, 1600, 2500, 4096, 6400, 10000),
                 n_fit_min=1024),
    # waist optimum of the same stack at fixed N
    "fig4a": dict(kind="scaling", backend="dipole", lattice="square",
                  shifted=True, a_z=3.0, resonance_n=5, n_axis=(576,),
                  w_axis=(0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45,
                          0.5, 0.55, 0.6), w_rule=("wol", 0.3)),
    # three-way N-scaling comparison, square and triangular
    "fig4b": dict(kind="scaling", backend="all", lattice="square",
                  shifted=True, a_z=3.0, resonance_n=5,
                  n_axis=(144, 256, 400, 576, 784, 1024),
                  w_rule=("wol", 0.3), n_fit_min=576),
    "fig4c": dict(kind="scaling", backend="all", lattice="triangular",
                  shifted=False, a_z=2.5, resonance_n=4,
                  n_axis=(144, 256, 400, 576, 784, 1024),
                  w_rule=("wol", 0.3), n_fit_min=576),
    # two-shell approximate cancellation scan and its finite realization
    "fig5a": dict(kind="scan", backend="analytic", lattice="square",
                  shifted=True, a_axis=_grid(1.4160, 1.9990, 293),
                  a_z_axis=(2.5, 3.5, 4.5)),
    "fig5b": dict(kind="scaling", backend="dipole", lattice="square",
                  shifted=True, a_z=4.5, a=1.58,
                  n_axis=(256, 576, 1024), w_rule=("wol", 0.3)),
    # four-layer exact cancellation search
    "design4": dict(kind="design", backend="analytic", lattice="both",
                    a_axis=(1.42, 2.30), a_z_search_max=10.0),
}


def named_job(job: str, **overrides) -> JobConfig:
    if job not in NAMED_JOBS:
        raise ConfigError(f"unknown job {job!r}; choose from "
                          f"{', '.join(sorted(NAMED_JOBS))}")
    kw = dict(NAMED_JOBS[job])
    kw.setdefault("name", job)
    kw.update(overrides)
    return JobConfig(**kw)
