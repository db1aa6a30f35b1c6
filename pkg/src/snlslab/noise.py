"""Real, spatially smooth Brownian forcing on the periodic box.

The noise is ``W(t, x) = eps * sum_k beta_k(t) * phi_hat(k) * e_k(x)`` where
``e_k`` runs over the real orthonormal trigonometric basis of the box
(constant ``L**(-d/2)``, and ``nu*cos(k.x)``, ``nu*sin(k.x)`` for each
pair ``+-k`` with ``nu = (2/L**d)**0.5``) restricted to a finite mode set.
One time-step increment is synthesised with a single inverse real FFT of
Hermitian spectral coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractViolation, DomainError
from .spectral import Field, GridSpec, PHYSICAL

SYMBOL_FAMILIES = ("gaussian", "sobolev")


@dataclass(frozen=True)
class NoiseSpec:
    """Mode set, smoothing symbol and strength of the noise.

    ``modes`` optionally replaces the cube ``|m|_inf <= k_max`` by an
    explicit list of lattice vectors; each listed ``m`` brings its partner
    ``-m`` with it.
    """

    amplitude: float = 0.0
    family: str = "gaussian"
    sigma: float = 1.0
    s: float = 2.0
    k_max: int | None = None
    modes: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.family not in SYMBOL_FAMILIES:
            raise DomainError(f"symbol family must be one of {SYMBOL_FAMILIES}")
        if not self.amplitude >= 0:
            raise DomainError("noise amplitude must be >= 0")
        if self.family == "gaussian" and not self.sigma > 0:
            raise DomainError("gaussian symbol width sigma must be > 0")
        if self.k_max is not None and self.k_max < 0:
            raise DomainError("k_max must be >= 0")
        if self.modes is not None:
            object.__setattr__(self, "modes",
                               tuple(tuple(int(c) for c in m) for m in self.modes))

    def symbol(self, k2: np.ndarray) -> np.ndarray:
        """``phi_hat`` as a function of ``|k|**2``."""
        k2 = np.asarray(k2, dtype=float)
        if self.family == "gaussian":
            return np.exp(-k2 / (2.0 * self.sigma**2))
        return (1.0 + k2) ** (-0.5 * self.s)

    def resolved_k_max(self, grid: GridSpec) -> int:
        return grid.n // 4 if self.k_max is None else int(self.k_max)


@dataclass
class NoiseIncrement:
    dW: np.ndarray
    dt: float

    def __post_init__(self):
        if np.iscomplexobj(self.dW):
            if np.max(np.abs(self.dW.imag), initial=0.0) > 1e-13:
                raise ContractViolation("noise increment must be real")
            self.dW = np.ascontiguousarray(self.dW.real)
        if not self.dt > 0:
            raise DomainError("increment time step must be > 0")

    def as_field(self, grid: GridSpec) -> Field:
        return Field(grid, self.dW.astype(np.complex128), PHYSICAL)


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(root_seed, *key)``.

    The draws for a given key do not depend on which process consumes the
    stream or on how many other streams exist.
    """

    root_seed: int
    key: tuple[int, ...] = ()
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.key, (int, np.integer)):
            self.key = (self.key,)
        self.key = tuple(int(k) for k in self.key)
        ss = np.random.SeedSequence(entropy=int(self.root_seed), spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def standard_normal(self, size) -> np.ndarray:
        self.counter += 1
        return self._gen.standard_normal(size)

    def spawn(self, *subkey: int) -> "RngStream":
        return RngStream(self.root_seed, self.key + tuple(subkey))


@dataclass(frozen=True)
class ModeTable:
    """Index bookkeeping for one ``(NoiseSpec, GridSpec)`` pair.

    ``half`` holds one representative of each ``+-m`` pair, ``zero`` is
    True when the constant mode is included.
    """

    half_m: np.ndarray          # (H, d) integer lattice vectors
    half_idx: tuple             # flat FFT indices of +m
    neg_idx: tuple              # flat FFT indices of -m
    zero: bool
    phi_half: np.ndarray        # symbol on the half set
    phi_zero: float
    sign_half: np.ndarray       # (-1)**sum(m): shift to box-centred coordinates

    @property
    def size(self) -> int:
        """Number of real basis functions, i.e. |K|."""
        return 2 * len(self.half_m) + int(self.zero)


def _lex_positive(m: np.ndarray) -> np.ndarray:
    """True for lattice vectors whose first nonzero component is positive."""
    out = np.zeros(len(m), dtype=bool)
    decided = np.zeros(len(m), dtype=bool)
    for j in range(m.shape[1]):
        col = m[:, j]
        out |= ~decided & (col > 0)
        decided |= col != 0
    return out


@lru_cache(maxsize=64)
def mode_table(spec: NoiseSpec, grid: GridSpec) -> ModeTable:
    d, n = grid.dim, grid.n
    if spec.modes is not None:
        ms = np.array(spec.modes, dtype=np.int64).reshape(-1, d) if spec.modes else \
            np.zeros((0, d), dtype=np.int64)
        if ms.shape[1] != d:
            raise DomainError(f"explicit noise modes must have {d} components")
        ms = np.unique(np.concatenate([ms, -ms]), axis=0)
    else:
        kmax = spec.resolved_k_max(grid)
        if kmax > n // 2 - 1:
            raise DomainError(f"k_max={kmax} reaches the Nyquist mode of N={n}")
        r = np.arange(-kmax, kmax + 1)
        ms = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
    if ms.size and np.max(np.abs(ms)) > n // 2 - 1:
        raise DomainError("noise mode outside the resolved band")
    zero = bool(np.any(np.all(ms == 0, axis=1))) if len(ms) else False
    half = ms[_lex_positive(ms)] if len(ms) else ms
    k = 2.0 * np.pi * half / grid.length
    k2 = np.sum(k**2, axis=1)
    return ModeTable(
        half_m=half,
        half_idx=tuple((half % n).T),
        neg_idx=tuple(((-half) % n).T),
        zero=zero,
        phi_half=spec.symbol(k2),
        phi_zero=float(spec.symbol(0.0)) if zero else 0.0,
        sign_half=np.where(half.sum(axis=1) % 2 == 0, 1.0, -1.0),
    )


def sample_coefficients(spec: NoiseSpec, grid: GridSpec, dt: float,
                        xi: np.ndarray) -> np.ndarray:
    """Hermitian spectral array whose backward DFT is the increment for ``xi``.

    ``xi`` has shape ``(..., |K|)`` laid out as
    ``[xi_0 (if constant mode), xi_cos..., xi_sin...]``; leading axes are
    treated as a batch.
    """
    tab = mode_table(spec, grid)
    xi = np.asarray(xi, dtype=float)
    batch = xi.shape[:-1]
    C = np.zeros(batch + grid.shape, dtype=np.complex128)
    scale = spec.amplitude * math.sqrt(dt) * grid.npoints
    nu = math.sqrt(2.0 / grid.volume)
    off = 0
    if tab.zero:
        C[(Ellipsis,) + (0,) * grid.dim] = scale * xi[..., 0] * tab.phi_zero / math.sqrt(grid.volume)
        off = 1
    H = len(tab.half_m)
    if H:
        xc, xs = xi[..., off:off + H], xi[..., off + H:off + 2 * H]
        c = (0.5 * nu * scale) * tab.phi_half * tab.sign_half * (xc - 1j * xs)
        C[(Ellipsis,) + tab.half_idx] = c
        C[(Ellipsis,) + tab.neg_idx] = np.conj(c)
    return C


def synthesize(spec: NoiseSpec, grid: GridSpec, dt: float, xi: np.ndarray) -> np.ndarray:
    """Real increment field(s) for the normal vector(s) ``xi``."""
    C = sample_coefficients(spec, grid, dt, xi)
    nd = grid.dim
    axes = tuple(range(C.ndim - nd, C.ndim))
    return np.fft.irfftn(C[..., : grid.n // 2 + 1], s=grid.shape, axes=axes)


def sample_increment(spec: NoiseSpec, grid: GridSpec, dt: float,
                     rng: RngStream) -> NoiseIncrement:
    """Draw ``dW(x) = eps*sqrt(dt)*sum_k xi_k phi_hat(k) e_k(x)``."""
    if not dt > 0:
        raise DomainError(f"time step must be > 0, got {dt}")
    tab = mode_table(spec, grid)
    xi = rng.standard_normal(tab.size)
    if spec.amplitude == 0.0 or tab.size == 0:
        return NoiseIncrement(np.zeros(grid.shape), dt)
    return NoiseIncrement(synthesize(spec, grid, dt, xi), dt)


def sample_increments(spec: NoiseSpec, grid: GridSpec, dt: float,
                      rng: RngStream, batch: int) -> np.ndarray:
    """``batch`` independent increments stacked on a leading axis."""
    if not dt > 0:
        raise DomainError(f"time step must be > 0, got {dt}")
    tab = mode_table(spec, grid)
    xi = rng.standard_normal((batch, tab.size))
    if spec.amplitude == 0.0 or tab.size == 0:
        return np.zeros((batch,) + grid.shape)
    return synthesize(spec, grid, dt, xi)


def basis_functions(spec: NoiseSpec, grid: GridSpec):
    """Yield ``(phi_hat(k), e_k(x))`` for every real basis function in the mode set."""
    tab = mode_table(spec, grid)
    if tab.zero:
        yield tab.phi_zero, np.full(grid.shape, 1.0 / math.sqrt(grid.volume))
    nu = math.sqrt(2.0 / grid.volume)
    for m, ph in zip(tab.half_m, tab.phi_half):
        arg = sum((2.0 * np.pi * m[j] / grid.length) * grid.coords[j]
                  for j in range(grid.dim))
        arg = np.broadcast_to(arg, grid.shape)
        yield ph, nu * np.cos(arg)
        yield ph, nu * np.sin(arg)


def correction_field(spec: NoiseSpec, grid: GridSpec) -> Field:
    """Ito-Stratonovich drift ``F(x) = eps**2 * sum_k (phi_hat(k) e_k(x))**2``.

    Direct summation over the mode set; cost is ``|K| * N**d``.
    """
    F = np.zeros(grid.shape)
    for ph, e in basis_functions(spec, grid):
        F += (ph * e) ** 2
    return Field(grid, spec.amplitude**2 * F, PHYSICAL)


def correction_constant(spec: NoiseSpec, grid: GridSpec) -> float:
    """Closed form of :func:`correction_field` when every ``+-m`` pair is present."""
    tab = mode_table(spec, grid)
    total = tab.phi_zero**2 + 2.0 * float(np.sum(tab.phi_half**2))
    return spec.amplitude**2 * total / grid.volume


def symbol_sums(spec: NoiseSpec, grid: GridSpec) -> dict[str, float]:
    """Raw sums ``sum phi_hat**2`` and ``sum phi_hat**2 (1+|k|**2)`` over the mode set."""
    tab = mode_table(spec, grid)
    k2 = np.sum((2.0 * np.pi * tab.half_m / grid.length) ** 2, axis=1)
    p2 = tab.phi_half**2
    return {
        "sum_phi2": tab.phi_zero**2 + 2.0 * float(p2.sum()),
        "sum_phi2_h1": tab.phi_zero**2 + 2.0 * float(np.sum(p2 * (1.0 + k2))),
    }
