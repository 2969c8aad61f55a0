"""Run configuration: an INI file with fixed sections and keys.

Unknown sections or keys are rejected, so a typo never silently falls back to a
default.  The resolved configuration (defaults filled in, command-line
overrides applied) has a canonical JSON form whose SHA-256 is stamped on every
output.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "SWEEP_AXES"]


class ConfigError(ValueError):
    """Invalid configuration; the command line maps it to exit status 2."""


SWEEP_AXES = ("beta", "mu", "lambda", "gamma", "eta")


@dataclass(frozen=True)
class GridSection:
    n_per_axis: int = 64
    box_side: float = 4.0


@dataclass(frozen=True)
class ModelSection:
    beta: float = 10.0
    mu: float = -1.0
    # ``lambda`` is a Python keyword; the INI key is ``lambda``
    lam: float = 0.0
    gamma: float = 10.0
    eta: float = 0.5
    dispersion: str = "none"
    hopping: float = 0.1
    momentum_points: int = 64


@dataclass(frozen=True)
class FieldSection:
    """Induction used by ``gap``: zero, uniform over the cell, or read from a VFLD1 file."""

    kind: str = "zero"
    strength: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class MollifierSection:
    epsilon: float = 0.2
    radius: float = 1.0


@dataclass(frozen=True)
class ExternalSection:
    kind: str = "loop"
    center: tuple[float, float, float] = (0.0, 0.0, 0.8)
    radius: float = 0.6
    axis: int = 2
    current: float = 1.0
    thickness: float = 0.125
    path: str = ""


@dataclass(frozen=True)
class SolverSection:
    mode: str = "all"
    tol: float = 1e-7
    maxiter: int = 200
    damping: float = 0.5
    cg_tol: float = 1e-12
    inner_tol: float = 1e-3
    starts: tuple[str, ...] = ("zero", "screened")


@dataclass(frozen=True)
class SweepSection:
    axes: tuple[tuple[str, float, float, int], ...] = ()
    suppression: bool = False
    workers: int = 1


@dataclass(frozen=True)
class CheckSection:
    samples: int = 20
    oracle_draws: int = 100


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    figures: bool = False


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    model: ModelSection = field(default_factory=ModelSection)
    bfield: FieldSection = field(default_factory=FieldSection)
    mollifier: MollifierSection = field(default_factory=MollifierSection)
    external: ExternalSection = field(default_factory=ExternalSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    check: CheckSection = field(default_factory=CheckSection)
    output: OutputSection = field(default_factory=OutputSection)
    run: RunSection = field(default_factory=RunSection)
    source_dir: str = "."

    def canonical(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("source_dir")
        return data

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.source_dir) / path

    def with_overrides(self, *, grid: int | None = None, seed: int | None = None, threads: int | None = None, out: str | None = None) -> "RunConfig":
        cfg = self
        if grid is not None:
            cfg = replace(cfg, grid=replace(cfg.grid, n_per_axis=grid))
        if seed is not None:
            cfg = replace(cfg, run=replace(cfg.run, seed=seed))
        if threads is not None:
            cfg = replace(cfg, run=replace(cfg.run, threads=threads))
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=out))
        _validate(cfg)
        return cfg

    def sweep_points(self) -> list[dict[str, float]]:
        """Cartesian product of the sweep axes, first axis slowest."""
        grids = [(name, np.linspace(a, b, n)) for name, a, b, n in self.sweep.axes]
        points: list[dict[str, float]] = [{}]
        for name, values in grids:
            points = [{**p, name: float(v)} for p in points for v in values]
        return points


_SECTIONS = {
    "grid": GridSection,
    "model": ModelSection,
    "field": FieldSection,
    "mollifier": MollifierSection,
    "external": ExternalSection,
    "solver": SolverSection,
    "sweep": SweepSection,
    "check": CheckSection,
    "output": OutputSection,
    "run": RunSection,
}

_ATTRS = {"field": "bfield"}
_KEY_ALIASES = {("model", "lambda"): "lam"}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def _parse_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _parse_axis(name: str, text: str) -> tuple[str, float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"sweep axis {name} must be start:stop:steps, got {text!r}")
    start, stop = _parse_float(parts[0]), _parse_float(parts[1])
    steps = _parse_int(parts[2])
    if steps < 1:
        raise ValueError(f"sweep axis {name} is empty")
    return (name, start, stop, steps)


def _convert(section: str, key: str, text: str, default: Any) -> Any:
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return _parse_int(text)
    if isinstance(default, float):
        return _parse_float(text)
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if key == "center":
            if len(items) != 3:
                raise ValueError("center needs three comma-separated numbers")
            return tuple(_parse_float(t) for t in items)
        return tuple(items)
    return text.strip()


def parse_config(text: str, source_dir: str = ".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00none")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    built: dict[str, Any] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls = _SECTIONS[section]
        defaults = cls()
        names = {f.name for f in fields(cls)}
        values: dict[str, Any] = {}
        axes = []
        for key, raw in parser.items(section):
            if section == "sweep" and key in SWEEP_AXES:
                try:
                    axes.append(_parse_axis(key, raw))
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
                continue
            attr = _KEY_ALIASES.get((section, key), key)
            if attr not in names or (section == "sweep" and attr == "axes"):
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values[attr] = _convert(section, attr, raw, getattr(defaults, attr))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
        if section == "sweep":
            values["axes"] = tuple(axes)
        built[_ATTRS.get(section, section)] = cls(**values)
    cfg = RunConfig(**built, source_dir=source_dir)
    _validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, source_dir=str(p.parent))


def _validate(cfg: RunConfig) -> None:
    g = cfg.grid
    if g.n_per_axis < 16 or g.n_per_axis % 2:
        raise ConfigError(f"grid.n_per_axis must be even and >= 16, got {g.n_per_axis}")
    if g.box_side < 2:
        raise ConfigError(f"grid.box_side must be >= 2, got {g.box_side}")
    m = cfg.model
    for name in ("beta", "gamma", "eta"):
        if not getattr(m, name) > 0:
            raise ConfigError(f"model.{name} must be positive")
    if m.dispersion not in ("none", "nearest_neighbor"):
        raise ConfigError("model.dispersion must be none or nearest_neighbor")
    if m.dispersion != "none" and m.lam != 0:
        raise ConfigError("a dispersion requires model.lambda = 0")
    if m.momentum_points < 2 or m.momentum_points % 2:
        raise ConfigError("model.momentum_points must be even and >= 2")
    if cfg.bfield.kind not in ("zero", "constant", "file"):
        raise ConfigError("field.kind must be zero, constant or file")
    if cfg.bfield.kind == "file" and not cfg.bfield.path:
        raise ConfigError("field.kind = file needs field.path")
    if cfg.mollifier.epsilon < 0 or not cfg.mollifier.radius > 0:
        raise ConfigError("mollifier.epsilon must be >= 0 and mollifier.radius > 0")
    e = cfg.external
    if e.kind not in ("loop", "helmholtz", "file"):
        raise ConfigError("external.kind must be loop, helmholtz or file")
    if e.kind == "file" and not e.path:
        raise ConfigError("external.kind = file needs external.path")
    if e.axis not in (0, 1, 2):
        raise ConfigError("external.axis must be 0, 1 or 2")
    if not e.radius > 0 or not e.thickness > 0:
        raise ConfigError("external.radius and external.thickness must be positive")
    s = cfg.solver
    if s.mode not in ("A", "J", "full", "all"):
        raise ConfigError("solver.mode must be A, J, full or all")
    for name in ("tol", "cg_tol", "inner_tol"):
        if not getattr(s, name) > 0:
            raise ConfigError(f"solver.{name} must be positive")
    if not 0 < s.damping <= 1:
        raise ConfigError("solver.damping must lie in (0, 1]")
    if s.maxiter < 1:
        raise ConfigError("solver.maxiter must be >= 1")
    if not s.starts or any(x not in ("zero", "screened") for x in s.starts):
        raise ConfigError("solver.starts must list zero and/or screened")
    if cfg.sweep.workers < 1:
        raise ConfigError("sweep.workers must be >= 1")
    if len({a[0] for a in cfg.sweep.axes}) != len(cfg.sweep.axes):
        raise ConfigError("a sweep axis is given twice")
    if cfg.check.samples < 1 or cfg.check.oracle_draws < 1:
        raise ConfigError("check.samples and check.oracle_draws must be >= 1")
    if cfg.run.seed < 0 or cfg.run.threads < 1:
        raise ConfigError("run.seed must be >= 0 and run.threads >= 1")
