"""Periodic-grid fields, unitary FFTs, spectral derivatives and norms.

A :class:`Field` carries its grid and a representation tag (``"physical"``
or ``"spectral"``). The transform pair is the unitary DFT
(``norm="ortho"``), so the discrete L2 norm

    ||f||_2 = (h**d * sum |f(x)|**2) ** 0.5

is the same number in either representation.

Physical coordinates are box centred: ``x_j = -L/2 + j*h``, so the grid
point with index ``N//2`` along every axis is the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ContractViolation, DomainError

PHYSICAL = "physical"
SPECTRAL = "spectral"


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``n`` points per side on ``[-L/2, L/2)**dim``."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise DomainError(f"points per side must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise DomainError(f"box length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def npoints(self) -> int:
        return self.n**self.dim

    @property
    def weight(self) -> float:
        """Quadrature weight ``h**d``."""
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim))

    @cached_property
    def x1d(self) -> np.ndarray:
        return -0.5 * self.length + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for j in range(self.dim):
            s = [1] * self.dim
            s[j] = self.n
            out.append(self.x1d.reshape(s))
        return out

    @cached_property
    def r2(self) -> np.ndarray:
        """``|x|**2`` on the grid (box-centred chart)."""
        return sum(np.broadcast_to(c**2, self.shape) for c in self.coords)

    @cached_property
    def m1d(self) -> np.ndarray:
        """Integer mode numbers in FFT order, in ``[-N/2, N/2)``."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)

    @cached_property
    def k1d(self) -> np.ndarray:
        return 2.0 * np.pi * self.m1d / self.length

    @cached_property
    def kvecs(self) -> list[np.ndarray]:
        out = []
        for j in range(self.dim):
            s = [1] * self.dim
            s[j] = self.n
            out.append(self.k1d.reshape(s))
        return out

    @cached_property
    def kgrad(self) -> list[np.ndarray]:
        """Derivative symbols ``i*k_j`` with the Nyquist coefficient zeroed."""
        k = self.k1d.copy()
        k[self.n // 2] = 0.0
        out = []
        for j in range(self.dim):
            s = [1] * self.dim
            s[j] = self.n
            out.append(1j * k.reshape(s))
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """``|k|**2``, the symbol of ``-Laplacian``."""
        return np.broadcast_to(sum(k**2 for k in self.kvecs), self.shape).copy()

    @cached_property
    def h1_weight(self) -> np.ndarray:
        """``1 + |k|**2`` with Nyquist components excluded from the gradient part."""
        return 1.0 + sum(np.broadcast_to(np.abs(g) ** 2, self.shape) for g in self.kgrad)

    @cached_property
    def mode_inf(self) -> np.ndarray:
        """``|m|_inf`` for every spectral index."""
        am = np.abs(self.m1d)
        out = np.zeros(self.shape, dtype=np.int64)
        for j in range(self.dim):
            s = [1] * self.dim
            s[j] = self.n
            out = np.maximum(out, am.reshape(s))
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keeps modes with ``|m|_inf <= N/3``."""
        return self.mode_inf <= self.n / 3.0

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=np.complex128)


@dataclass
class Field:
    """Complex samples of a function on ``grid`` in one of two representations."""

    grid: GridSpec
    values: np.ndarray
    rep: str = PHYSICAL

    def __post_init__(self):
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ContractViolation(f"unknown representation tag {self.rep!r}")
        v = np.asarray(self.values, dtype=np.complex128)
        if v.size != self.grid.npoints:
            raise ContractViolation(
                f"field has {v.size} values, grid needs {self.grid.npoints}")
        self.values = v.reshape(self.grid.shape)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "Field":
        """Sample ``func(*coords)`` on the grid."""
        vals = np.broadcast_to(func(*grid.coords), grid.shape)
        return cls(grid, np.array(vals, dtype=np.complex128), PHYSICAL)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.rep)

    @property
    def is_physical(self) -> bool:
        return self.rep == PHYSICAL


def to_spectral(f: Field) -> Field:
    if f.rep != PHYSICAL:
        raise ContractViolation("to_spectral expects a physical field")
    return Field(f.grid, np.fft.fftn(f.values, norm="ortho"), SPECTRAL)


def to_physical(f: Field) -> Field:
    if f.rep != SPECTRAL:
        raise ContractViolation("to_physical expects a spectral field")
    return Field(f.grid, np.fft.ifftn(f.values, norm="ortho"), PHYSICAL)


def as_physical(f: Field) -> Field:
    return f if f.rep == PHYSICAL else to_physical(f)


def as_spectral(f: Field) -> Field:
    return f if f.rep == SPECTRAL else to_spectral(f)


def gradient(f: Field) -> list[Field]:
    """Spectral partial derivatives, returned as physical fields."""
    fh = as_spectral(f).values
    return [Field(f.grid, np.fft.ifftn(g * fh, norm="ortho"), PHYSICAL)
            for g in f.grid.kgrad]


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1.0:  # also rejects nan
        raise DomainError(f"Lebesgue exponent must be >= 1, got {p}")
    return p


def lp_norm_array(values: np.ndarray, p: float, weight: float) -> float:
    """``(weight * sum |v|**p)**(1/p)`` for a raw physical array."""
    flat = values.reshape(-1)
    if math.isinf(p):
        return kernels.abs_max(flat)
    return (weight * kernels.abs_pow_sum(flat, p)) ** (1.0 / p)


def lebesgue_norm(f: Field, p: float) -> float:
    p = _check_p(p)
    g = as_physical(f)
    return lp_norm_array(g.values, p, g.grid.weight)


def spectral_l2_norm(f: Field) -> float:
    g = as_spectral(f)
    return math.sqrt(g.grid.weight * kernels.abs_pow_sum(g.values.reshape(-1), 2.0))


def sobolev_w1p_norm(f: Field, p: float) -> float:
    """``||f||_p + sum_j ||d_j f||_p`` (sum-of-norms convention)."""
    p = _check_p(p)
    total = lebesgue_norm(f, p)
    for g in gradient(f):
        total += lebesgue_norm(g, p)
    return total


def h1_norm(f: Field) -> float:
    """``(||f||_2**2 + ||grad f||_2**2)**0.5``, evaluated on the spectrum."""
    fh = as_spectral(f)
    a2 = fh.values.real**2 + fh.values.imag**2
    return math.sqrt(fh.grid.weight * float(np.sum(fh.grid.h1_weight * a2)))


def free_propagator(grid: GridSpec, t: float) -> np.ndarray:
    """Spectral multiplier ``exp(i|k|^2 t)`` realising ``S(t) = exp(-it Laplacian)``."""
    return np.exp(1j * t * grid.k2)


def free_propagate(f: Field, t: float) -> Field:
    """Apply the free Schrodinger group; the output keeps the input representation."""
    t = float(t)
    if not math.isfinite(t):
        raise DomainError("propagation time must be finite")
    fh = as_spectral(f)
    out = Field(f.grid, fh.values * free_propagator(f.grid, t), SPECTRAL)
    return out if f.rep == SPECTRAL else to_physical(out)


__all__ = [
    "PHYSICAL", "SPECTRAL", "GridSpec", "Field", "to_spectral", "to_physical",
    "as_physical", "as_spectral", "gradient", "lebesgue_norm", "lp_norm_array",
    "spectral_l2_norm", "sobolev_w1p_norm", "h1_norm", "free_propagator",
    "free_propagate",
]
