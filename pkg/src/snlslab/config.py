"""Experiment configuration: one YAML file, validated against typed sections.

Unknown keys and ill-typed values are reported with the line and column
of the offending node. Every field has a default, and ``to_dict`` writes
all of them back so an emitted summary fully describes its run.
"""
from __future__ import annotations

import math
import types
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, SNLSError
from .integrator import CutoffSpec, SolverConfig
from .montecarlo import EnsembleConfig, geometric_ladder
from .noise import NoiseSpec
from .spectral import Field, GridSpec, h1_norm


@dataclass
class GridSection:
    dim: int = 1
    n: int = 64
    length: float = 16.0


@dataclass
class NoiseSection:
    amplitude: float = 0.0
    family: str = "gaussian"
    sigma: float = 1.0
    s: float = 2.0
    k_max: int | None = None
    modes: list[list[int]] | None = None


@dataclass
class SolverSection:
    dt: float = 1e-3
    splitting: str = "strang"
    power: int = 3
    focusing: int = 1
    truncation: bool = True
    radius: float | None = None
    radius_factor: float | None = None
    dealias: bool = False
    nonlinear: bool = True
    max_steps: int = 5_000_000


@dataclass
class CutoffSection:
    sharpness: float = 1.0


@dataclass
class InitialSection:
    """``gaussian``: ``A exp(-|x-c|**2 / (2 w**2))``; ``plane_wave``:
    ``A exp(i k.x)`` with ``k = 2 pi m / L``; ``file``: a ``.npy`` array."""

    family: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    center: list[float] | None = None
    wavevector: list[int] | None = None
    path: str | None = None


@dataclass
class RunSection:
    T: float = 1.0
    diagnostics_every: int = 1
    continue_past_hit: bool = False
    check_resolution: bool = True


@dataclass
class EnsembleSection:
    trajectories: int = 100
    ladder: list[float] | None = None
    top: float = 1.0
    ratio: float = 0.5
    count: int = 6
    nested: bool = True
    workers: int = 1
    unresolved_as_hit: bool = True
    level: float = 0.95
    T0: float | None = None


@dataclass
class FitSection:
    fixed_beta: float | None = 0.25
    free_beta: bool = True
    bootstrap: int = 200
    weighted: bool = True


@dataclass
class KhintchineSection:
    rhos: list[float] = field(default_factory=lambda: [2.0, 4.0, 8.0])
    samples: int = 100_000
    coefficients: list[list[float]] = field(
        default_factory=lambda: [[1.0] * 8, [1.0, 0.5, 0.25, 0.125], [1.0]])


@dataclass
class DispersiveSection:
    p: float = 2.4
    window: list[float] = field(default_factory=lambda: [1.5, 4.0])
    npoints: int = 16
    tolerance: float = 0.05


@dataclass
class BdgSection:
    T: float = 0.5
    rhos: list[float] = field(default_factory=lambda: [2.0, 4.0, 8.0])
    samples: int = 1000
    nsteps: int = 32
    ratio_limit: float = 10.0


@dataclass
class ConvergenceSection:
    T: float = 1.0
    levels: int = 4
    finest_extra: int = 3


@dataclass
class ProbeSection:
    khintchine: KhintchineSection = field(default_factory=KhintchineSection)
    dispersive: DispersiveSection = field(default_factory=DispersiveSection)
    bdg: BdgSection = field(default_factory=BdgSection)
    convergence: ConvergenceSection = field(default_factory=ConvergenceSection)


@dataclass
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    solver: SolverSection = field(default_factory=SolverSection)
    cutoff: CutoffSection = field(default_factory=CutoffSection)
    initial: InitialSection = field(default_factory=InitialSection)
    run: RunSection = field(default_factory=RunSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    fit: FitSection = field(default_factory=FitSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    seed: int = 0
    output: str = "out"
    base_dir: str = field(default=".", repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    # -- builders ---------------------------------------------------------------

    def grid_spec(self) -> GridSpec:
        return _domain("grid", lambda: GridSpec(self.grid.dim, self.grid.n, self.grid.length))

    def noise_spec(self) -> NoiseSpec:
        nz = self.noise
        modes = None if nz.modes is None else tuple(tuple(m) for m in nz.modes)
        return _domain("noise", lambda: NoiseSpec(nz.amplitude, nz.family, nz.sigma, nz.s,
                                                  nz.k_max, modes))

    def cutoff_spec(self) -> CutoffSpec:
        return _domain("cutoff", lambda: CutoffSpec(self.cutoff.sharpness))

    def initial_field(self, grid: GridSpec | None = None) -> Field:
        grid = grid or self.grid_spec()
        ini = self.initial
        if ini.family == "gaussian":
            c = ini.center or [0.0] * grid.dim
            if len(c) != grid.dim:
                raise ConfigError(f"initial.center needs {grid.dim} components")
            if not ini.width > 0:
                raise ConfigError("initial.width must be > 0")
            r2 = sum((x - cj) ** 2 for x, cj in zip(grid.coords, c))
            vals = ini.amplitude * np.exp(-r2 / (2.0 * ini.width**2))
            return Field(grid, np.broadcast_to(vals, grid.shape).astype(np.complex128))
        if ini.family == "plane_wave":
            m = ini.wavevector or [0] * grid.dim
            if len(m) != grid.dim:
                raise ConfigError(f"initial.wavevector needs {grid.dim} components")
            arg = sum(2.0 * math.pi * mj / grid.length * x for mj, x in zip(m, grid.coords))
            vals = ini.amplitude * np.exp(1j * np.broadcast_to(arg, grid.shape))
            return Field(grid, vals)
        if ini.family == "file":
            if not ini.path:
                raise ConfigError("initial.path is required for the file family")
            p = Path(ini.path)
            if not p.is_absolute():
                p = Path(self.base_dir) / p
            try:
                vals = np.load(p)
            except OSError as exc:
                raise ConfigError(f"cannot read initial data {p}: {exc}") from exc
            if vals.shape != grid.shape:
                raise ConfigError(f"initial data shape {vals.shape} != grid shape {grid.shape}")
            return Field(grid, vals.astype(np.complex128))
        raise ConfigError(f"initial.family must be gaussian, plane_wave or file, got {ini.family!r}")

    def solver_config(self, u0: Field | None = None) -> SolverConfig:
        s = self.solver
        if s.radius is not None and s.radius_factor is not None:
            raise ConfigError("give solver.radius or solver.radius_factor, not both")
        radius = math.inf
        if s.radius is not None:
            radius = s.radius
        elif s.radius_factor is not None:
            radius = s.radius_factor * h1_norm(u0 if u0 is not None else self.initial_field())
        return _domain("solver", lambda: SolverConfig(
            dt=s.dt, splitting=s.splitting, power=s.power, focusing=s.focusing,
            truncation=s.truncation, radius=radius, dealias=s.dealias,
            nonlinear=s.nonlinear, max_steps=s.max_steps))

    def ladder(self) -> tuple[float, ...]:
        e = self.ensemble
        if e.ladder is not None:
            return tuple(e.ladder)
        if not (e.top > 0 and 0 < e.ratio < 1 and e.count >= 1):
            raise ConfigError("ensemble needs top > 0, 0 < ratio < 1 and count >= 1")
        return geometric_ladder(e.top, e.ratio, e.count)

    def ensemble_config(self, workers: int | None = None) -> EnsembleConfig:
        grid = self.grid_spec()
        u0 = self.initial_field(grid)
        e = self.ensemble
        return _domain("ensemble", lambda: EnsembleConfig(
            grid=grid, solver=self.solver_config(u0), noise=self.noise_spec(),
            u0=u0.values, ladder=self.ladder(), trajectories=e.trajectories,
            root_seed=self.seed, workers=e.workers if workers is None else workers,
            cutoff=self.cutoff_spec(), nested=e.nested,
            unresolved_as_hit=e.unresolved_as_hit, level=e.level, T0=e.T0))


def _domain(section: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except SNLSError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


# -- parsing --------------------------------------------------------------------

def _where(node: yaml.Node) -> str:
    m = node.start_mark
    return f"line {m.line + 1}, column {m.column + 1}"


def _is_dataclass_type(tp) -> bool:
    return isinstance(tp, type) and hasattr(tp, "__dataclass_fields__")


def _coerce(tp, value: Any, node: yaml.Node, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, node, path)
    if _is_dataclass_type(tp):
        return _build(tp, value, node, path)
    if origin is list:
        if not isinstance(value, list) or not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{path}: expected a list ({_where(node)})")
        return [_coerce(args[0], v, n, f"{path}[{i}]")
                for i, (v, n) in enumerate(zip(value, node.value))]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false ({_where(node)})")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer ({_where(node)})")
        return value
    if tp is float:
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number ({_where(node)})")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string ({_where(node)})")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _build(cls, value: Any, node: yaml.Node, path: str):
    if value is None:
        return cls()
    if not isinstance(value, dict) or not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{path or 'config'}: expected a mapping ({_where(node)})")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.name != "base_dir"}
    kwargs = {}
    for knode, vnode in node.value:
        key = knode.value
        sub = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown key '{sub}' ({_where(knode)})")
        kwargs[key] = _coerce(hints[key], value[key], vnode, sub)
    return cls(**kwargs)


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    """Parse and type-check a YAML document into an :class:`ExperimentConfig`."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if node is None:
        cfg = ExperimentConfig()
    else:
        cfg = _build(ExperimentConfig, data, node, "")
    cfg.base_dir = str(base_dir)
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, p.parent)
