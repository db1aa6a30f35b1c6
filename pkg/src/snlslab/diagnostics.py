"""Monitored quantities: mass, energy, variance and the resolution monitor."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import IO

import numpy as np

from .integrator import W_EXPONENT, SolverConfig, TrajectoryState
from .spectral import Field, as_physical, as_spectral, gradient, h1_norm, lebesgue_norm, sobolev_w1p_norm

TAIL_FRACTION_LIMIT = 0.01


def mass(u: Field) -> float:
    return lebesgue_norm(u, 2.0) ** 2


def energy(u: Field, cfg: SolverConfig) -> float:
    """``0.5*||grad u||_2**2 - mu/(p+1) * ||u||_{p+1}**(p+1)``."""
    p = cfg.power
    grad2 = sum(lebesgue_norm(g, 2.0) ** 2 for g in gradient(u))
    return 0.5 * grad2 - cfg.focusing / (p + 1) * lebesgue_norm(u, p + 1) ** (p + 1)


def variance(u: Field) -> float:
    """``int |x|**2 |u|**2`` in the box-centred chart."""
    g = as_physical(u)
    return float(g.grid.weight * np.sum(g.grid.r2 * np.abs(g.values) ** 2))


def distance_to_boundary(u: Field) -> float:
    """Distance from the ``|u|**2``-weighted centroid to the nearest box face."""
    g = as_physical(u)
    w = np.abs(g.values) ** 2
    tot = w.sum()
    if tot == 0:
        return 0.5 * g.grid.length
    centroid = [float(np.sum(np.broadcast_to(c, g.grid.shape) * w) / tot) for c in g.grid.coords]
    return 0.5 * g.grid.length - max(abs(c) for c in centroid)


def spectral_tail_fraction(u: Field) -> float:
    """Share of spectral mass in modes with ``|m|_inf > N/3``."""
    fh = as_spectral(u)
    a2 = np.abs(fh.values) ** 2
    total = float(a2.sum())
    if total == 0.0:
        return 0.0
    return float(a2[fh.grid.mode_inf > fh.grid.n / 3.0].sum()) / total


def is_resolved(u: Field) -> bool:
    return spectral_tail_fraction(u) <= TAIL_FRACTION_LIMIT


@dataclass
class DiagnosticsRow:
    t: float
    mass: float
    energy: float
    variance: float
    h1: float
    w1_12_5: float
    x1: float
    tail_fraction: float
    theta_value: float

    @classmethod
    def measure(cls, state: TrajectoryState, cfg: SolverConfig) -> "DiagnosticsRow":
        u = state.u
        return cls(
            t=state.t, mass=mass(u), energy=energy(u, cfg), variance=variance(u),
            h1=h1_norm(u), w1_12_5=sobolev_w1p_norm(u, W_EXPONENT), x1=state.x1,
            tail_fraction=spectral_tail_fraction(u), theta_value=state.theta,
        )

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())


COLUMNS = [f.name for f in fields(DiagnosticsRow)]


class DiagnosticsRecorder:
    """Evolve callback that measures a row every ``every`` steps.

    Rows are kept in memory and, when ``stream`` is given, written as CSV
    with a named header.
    """

    def __init__(self, cfg: SolverConfig, every: int = 1, stream: IO[str] | None = None,
                 keep_snapshots: bool = False):
        self.cfg = cfg
        self.every = max(1, int(every))
        self.rows: list[DiagnosticsRow] = []
        self.snapshots: list[Field] = []
        self.times: list[float] = []
        self.keep_snapshots = keep_snapshots
        self._writer = None
        if stream is not None:
            self._writer = csv.writer(stream, lineterminator="\n")
            self._writer.writerow(COLUMNS)

    def __call__(self, state: TrajectoryState):
        if self.keep_snapshots:
            self.snapshots.append(state.u.copy())
            self.times.append(state.t)
        if state.steps % self.every:
            return None
        row = DiagnosticsRow.measure(state, self.cfg)
        self.rows.append(row)
        if self._writer is not None:
            self._writer.writerow([repr(float(getattr(row, c))) for c in COLUMNS])
        return None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])
