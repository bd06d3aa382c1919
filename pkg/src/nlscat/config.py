"""Experiment configuration: dataclasses, TOML/JSON loading and dotted overrides.

A configuration document is a nested mapping whose sections mirror the
dataclasses below. Unknown keys and ill-typed values are rejected with the
dotted name of the offending field.
"""
from __future__ import annotations

import dataclasses
import json
import sys
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

import numpy as np

from .maxwell_kernels import AssemblyOptions
from .nonlinearity import PowerLaw
from .scattering_solver import IncidentWave, SolverConfig
from .surface_mesh import SurfaceMesh, load_mesh, make_cube_mesh, merge_meshes


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class CubeSpec:
    center: tuple = (0.0, 0.0, 0.0)
    side: float = 1.0


@dataclass
class SceneConfig:
    """Either a list of cubes (meshed with ``n`` cells per edge) or a mesh file."""

    cubes: list = field(default_factory=lambda: [CubeSpec((0.75, 0.0, 0.0)), CubeSpec((-0.75, 0.0, 0.0))])
    n: int = 2
    mesh_file: str | None = None
    mesh_format: str | None = None

    def build(self, n: int | None = None) -> SurfaceMesh:
        """Mesh of the scene; ``n`` overrides the subdivision level of generated cubes."""
        if self.mesh_file is not None:
            return load_mesh(self.mesh_file, self.mesh_format)
        level = self.n if n is None else n
        parts = [make_cube_mesh(c.center, c.side, level) for c in self.cubes]
        return parts[0] if len(parts) == 1 else merge_meshes(*parts)


@dataclass
class WaveConfig:
    c: float = 100.0
    t0: float = -2.0
    polarization: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    amplitude: float = 1.0

    def build(self) -> IncidentWave:
        return IncidentWave(tuple(self.polarization), tuple(self.direction), self.c, self.t0, self.amplitude)


@dataclass
class TimeConfig:
    m: int = 2
    N: int = 64
    T: float = 3.0
    tau: float | None = None  # optional, must equal T / N
    shift: float | None = None
    allow_unshifted: bool = False
    contour_eps: float = 1e-14
    contour_oversample: int = 1


@dataclass
class NewtonConfig:
    tol_rel: float = 1e-9
    tol_abs: float = 1e-12
    max_iter: int = 50
    max_halvings: int = 30
    reg_eps: float = 1e-10


@dataclass
class QuadratureConfig:
    singular_order: int = 4
    far_rule: str = "radon7"
    near_levels: int = 1


@dataclass
class ConvergenceConfig:
    """Refinement ladders for the self-convergence studies."""

    time_N: list = field(default_factory=lambda: [16, 32, 64])
    time_reference_N: int = 256
    time_mesh_n: int = 2
    space_n: list = field(default_factory=lambda: [1, 2, 4])
    space_reference_n: int = 8
    space_N: int = 32


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    wave: WaveConfig = field(default_factory=WaveConfig)
    alpha: float = 0.5
    time: TimeConfig = field(default_factory=TimeConfig)
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    points: list = field(default_factory=lambda: [[0.0, 0.0, 0.0]])
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    output_dir: str = "results"
    seed: int = 0

    def solver_config(self, N: int | None = None) -> SolverConfig:
        t, nw, q = self.time, self.newton, self.quadrature
        N = t.N if N is None else N
        return SolverConfig(
            alpha=self.alpha, m=t.m, N=N, T=t.T, shift=t.shift, allow_unshifted=t.allow_unshifted,
            reg_eps=nw.reg_eps, newton_tol_rel=nw.tol_rel, newton_tol_abs=nw.tol_abs,
            newton_max_iter=nw.max_iter, max_halvings=nw.max_halvings,
            contour_eps=t.contour_eps, contour_oversample=t.contour_oversample,
            assembly=AssemblyOptions(q.singular_order, q.far_rule, q.near_levels),
        )

    def validate(self) -> None:
        """Cross-field checks; raises :class:`ConfigError`."""
        _guard("alpha", lambda: PowerLaw(self.alpha, self.newton.reg_eps))
        t = self.time
        if t.tau is not None and t.N > 0 and abs(t.tau * t.N - t.T) > 1e-12 * t.T:
            raise ConfigError(f"time.tau: tau * N = {t.tau * t.N} does not equal T = {t.T}")
        _guard("time", self.solver_config)
        _guard("wave", self.wave.build)
        if self.scene.mesh_file is not None and not Path(self.scene.mesh_file).is_file():
            raise ConfigError(f"scene.mesh_file: no such file {self.scene.mesh_file!r}")
        if not self.scene.cubes and self.scene.mesh_file is None:
            raise ConfigError("scene: needs at least one cube or a mesh_file")
        for i, c in enumerate(self.scene.cubes):
            if not c.side > 0:
                raise ConfigError(f"scene.cubes[{i}].side must be positive")
        if self.scene.n < 1:
            raise ConfigError("scene.n must be >= 1")
        pts = np.asarray(self.points, float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ConfigError("points: expected a list of 3-vectors")
        if self.scene.mesh_file is None:
            for i, p in enumerate(pts):
                for c in self.scene.cubes:
                    if np.all(np.abs(p - np.asarray(c.center)) <= c.side / 2):
                        raise ConfigError(f"points[{i}] = {p.tolist()} is not exterior to the scene")
        cv = self.convergence
        if len(cv.time_N) < 3 or len(cv.space_n) < 3:
            raise ConfigError("convergence: at least three refinement levels are required")
        if any(n >= cv.time_reference_N for n in cv.time_N):
            raise ConfigError("convergence.time_reference_N must exceed every level in time_N")
        if any(cv.time_reference_N % n for n in cv.time_N):
            raise ConfigError("convergence.time_N levels must divide time_reference_N")
        if any(n >= cv.space_reference_n for n in cv.space_n):
            raise ConfigError("convergence.space_reference_n must exceed every level in space_n")


def _guard(name, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


# ---------------------------------------------------------------- dict conversion


def _coerce(value, tp, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a table, got {type(value).__name__}")
        return _from_dict(tp, value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(float(v) for v in value)
    if tp is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return list(value)
    return value


def _from_dict(cls, data: dict, where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key(s): {', '.join(prefix + k for k in sorted(unknown))}")
    kwargs = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        if cls is SceneConfig and key == "cubes":
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list of cube tables")
            kwargs[key] = [_coerce(v, CubeSpec, f"{path}[{i}]") for i, v in enumerate(value)]
        else:
            kwargs[key] = _coerce(value, hints[key], path)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data)
    cfg.validate()
    return cfg


def config_to_dict(cfg) -> dict:
    def clean(v):
        if isinstance(v, tuple):
            return list(v)
        if isinstance(v, list):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items() if x is not None}
        return v

    return clean(dataclasses.asdict(cfg))


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b.c=value`` with ``value`` read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    keys = key.strip().split(".")
    if not all(keys):
        raise ConfigError(f"override {text!r} has an empty key component")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_overrides(data: dict, overrides) -> dict:
    out = json.loads(json.dumps(data))  # deep copy of plain data
    for text in overrides or ():
        keys, value = parse_override(text)
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {k} is not a table")
        node[keys[-1]] = value
    return out


def read_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Defaults, then the document at ``path`` (TOML or JSON), then ``key=value`` overrides."""
    data = read_document(path) if path is not None else {}
    return config_from_dict(apply_overrides(data, overrides))
