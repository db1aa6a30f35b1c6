"""Ensemble estimation of ``P(tau_R <= T)`` and the ``ln p = a - c T**(-beta)`` fit.

Every trajectory owns a random stream keyed by ``(root_seed, family,
index)``, so counts do not depend on the worker count or scheduling.
With a nested ladder (the default) one trajectory per index is run to the
largest horizon and its crossing time answers every smaller horizon.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .errors import BudgetError, DomainError, FitError
from .integrator import CutoffSpec, SolverConfig, evolve, initial_state
from .noise import NoiseSpec, RngStream
from .spectral import Field, GridSpec

log = logging.getLogger(__name__)

NESTED_FAMILY = -1
_NESTED_KEY = 2**32 - 1


# -- intervals ---------------------------------------------------------------

def wilson_or_exact_interval(s: int, M: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for ``s`` successes in ``M`` trials."""
    if not 0 <= s <= M or M < 1:
        raise DomainError(f"need 0 <= s <= M and M >= 1, got s={s}, M={M}")
    alpha = 1.0 - level
    lo = 0.0 if s == 0 else float(stats.beta.ppf(alpha / 2, s, M - s + 1))
    hi = 1.0 if s == M else float(stats.beta.ppf(1 - alpha / 2, s + 1, M - s))
    return lo, hi


@dataclass
class ProbabilityEstimate:
    T: float
    successes: int
    trials: int
    p_hat: float
    lo: float
    hi: float
    complete: bool = True
    unresolved: int = 0

    @classmethod
    def from_counts(cls, T: float, s: int, M: int, level: float = 0.95, **kw) -> "ProbabilityEstimate":
        lo, hi = wilson_or_exact_interval(s, M, level)
        return cls(T=float(T), successes=int(s), trials=int(M), p_hat=s / M, lo=lo, hi=hi, **kw)


# -- ensemble ------------------------------------------------------------------

@dataclass
class EnsembleConfig:
    grid: GridSpec
    solver: SolverConfig
    noise: NoiseSpec
    u0: np.ndarray
    ladder: tuple[float, ...]
    trajectories: int = 100
    root_seed: int = 0
    workers: int = 1
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    nested: bool = True
    unresolved_as_hit: bool = True
    level: float = 0.95
    T0: float | None = None

    def __post_init__(self):
        if self.trajectories < 1:
            raise DomainError("trajectories per cell must be >= 1")
        lad = tuple(float(t) for t in self.ladder)
        if not lad or any(t <= 0 for t in lad):
            raise DomainError("ladder horizons must be positive")
        if any(b >= a for a, b in zip(lad, lad[1:])):
            raise DomainError("ladder must be strictly decreasing")
        self.ladder = lad
        if self.T0 is not None and lad[0] > self.T0:
            log.warning("largest horizon %g exceeds the small-time regime T0=%g", lad[0], self.T0)


def geometric_ladder(top: float, ratio: float, count: int) -> tuple[float, ...]:
    return tuple(top * ratio**j for j in range(count))


def _trajectory(cfg: EnsembleConfig, family: int, index: int, T: float) -> dict:
    rng = RngStream(cfg.root_seed, (_NESTED_KEY if family == NESTED_FAMILY else family, index))
    state = initial_state(Field(cfg.grid, cfg.u0))
    row = {"cell": family, "index": index, "seed": cfg.root_seed, "budget_error": 0}
    try:
        out = evolve(state, cfg.solver, cfg.noise, cfg.cutoff, rng, T)
    except BudgetError:
        row.update(hit=0, tau_R=math.inf, t_final=0.0, sup_h1=math.nan, int_w8=math.nan,
                   x1=math.nan, resolution_lost=0, steps=0, budget_error=1)
        return row
    row.update(out.as_row())
    return row


_WORKER_CFG: EnsembleConfig | None = None


def _init_worker(cfg: EnsembleConfig):
    global _WORKER_CFG
    _WORKER_CFG = cfg


def _run_chunk(tasks: list[tuple[int, int, float]]) -> list[dict]:
    return [_trajectory(_WORKER_CFG, fam, idx, T) for fam, idx, T in tasks]


def resolve_workers(requested: int | None) -> int:
    env = os.environ.get("SNLS_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, int(requested or 1))


def _run_tasks(cfg: EnsembleConfig, tasks: list[tuple[int, int, float]]) -> list[dict]:
    workers = max(1, int(cfg.workers))
    if workers == 1:
        return [_trajectory(cfg, *t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    chunks = [tasks[i:i + chunk] for i in range(0, len(tasks), chunk)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(cfg,)) as pool:
        results = []
        for part in pool.map(_run_chunk, chunks):
            results.extend(part)
    return results


def _is_event(row: dict, T: float, unresolved_as_hit: bool) -> bool:
    if row["hit"] and row["tau_R"] <= T:
        return True
    return bool(unresolved_as_hit and row["resolution_lost"] and row["t_final"] <= T)


def simulate_ensemble(cfg: EnsembleConfig) -> tuple[list[ProbabilityEstimate], list[dict]]:
    """Run every cell of the ladder; return estimates and per-trajectory rows."""
    M = cfg.trajectories
    if cfg.nested:
        tasks = [(NESTED_FAMILY, i, cfg.ladder[0]) for i in range(M)]
    else:
        tasks = [(c, i, T) for c, T in enumerate(cfg.ladder) for i in range(M)]
    rows = _run_tasks(cfg, tasks)
    rows.sort(key=lambda r: (r["cell"], r["index"]))

    estimates = []
    for c, T in enumerate(cfg.ladder):
        cell_rows = rows if cfg.nested else [r for r in rows if r["cell"] == c]
        ok = [r for r in cell_rows if not r["budget_error"]]
        s = sum(_is_event(r, T, cfg.unresolved_as_hit) for r in ok)
        unresolved = sum(1 for r in ok if r["resolution_lost"] and r["t_final"] <= T)
        if not ok:
            estimates.append(ProbabilityEstimate(T, 0, 0, math.nan, 0.0, 1.0, False, 0))
            continue
        estimates.append(ProbabilityEstimate.from_counts(
            T, s, len(ok), cfg.level, complete=len(ok) == M, unresolved=unresolved))
    return estimates, rows


def run_ensemble(cfg: EnsembleConfig) -> list[ProbabilityEstimate]:
    return simulate_ensemble(cfg)[0]


def monotone_within_intervals(estimates: Sequence[ProbabilityEstimate]) -> bool:
    """True when no smaller horizon has ``p_hat`` above a larger horizon's upper limit."""
    ests = sorted(estimates, key=lambda e: -e.T)
    for i, big in enumerate(ests):
        for small in ests[i + 1:]:
            if small.p_hat > big.hi:
                return False
    return True


# -- scaling fit -----------------------------------------------------------------

@dataclass
class ScalingFit:
    a: float
    c: float
    beta: float
    beta_fixed: bool
    used: list[bool]
    censored: list[bool]
    residuals: list[float]
    constraint_active: bool
    intervals: dict = field(default_factory=dict)
    bootstrap_failures: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


_Z95 = float(stats.norm.ppf(0.975))


def _residuals(params, T, y, w, Tc, yc, wc, beta):
    a, c = params[0], params[1]
    b = beta if beta is not None else params[2]
    r = w * (a - c * T ** (-b) - y)
    if len(Tc):
        rc = wc * np.maximum(0.0, a - c * Tc ** (-b) - yc)
        r = np.concatenate([r, rc])
    return r


def _linear_fit(T, y, w, beta):
    """Weighted least squares for ``(a, c)`` at fixed ``beta`` with ``c >= 0``."""
    X = np.column_stack([np.ones_like(T), -T ** (-beta)])
    sol, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    a, c = float(sol[0]), float(sol[1])
    if c < 0:
        return float(np.sum(w**2 * y) / np.sum(w**2)), 0.0, True
    return a, c, False


def fit_log_model(T, y, w=None, T_cens=(), y_cens=(), fixed_beta: float | None = None,
                  beta_bounds=(1e-3, 10.0)) -> tuple[float, float, float, bool]:
    """Fit ``y = a - c T**(-beta)``; censored points enter as ``model <= y_cens``.

    Returns ``(a, c, beta, constraint_active)``.
    """
    T = np.asarray(T, float)
    y = np.asarray(y, float)
    w = np.ones_like(T) if w is None else np.asarray(w, float)
    Tc, yc = np.asarray(T_cens, float), np.asarray(y_cens, float)
    wc = np.full_like(Tc, float(np.median(w)) if len(w) else 1.0)

    if fixed_beta is not None:
        a, c, active = _linear_fit(T, y, w, fixed_beta)
        if len(Tc) and np.any(a - c * Tc ** (-fixed_beta) > yc):
            res = optimize.least_squares(
                _residuals, [a, c], args=(T, y, w, Tc, yc, wc, fixed_beta),
                bounds=([-np.inf, 0.0], [np.inf, np.inf]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
            a, c = map(float, res.x)
            active = c <= 0.0
        return a, c, float(fixed_beta), active

    # profile over beta for a starting point, then polish all three jointly
    grid = np.geomspace(beta_bounds[0] * 10, beta_bounds[1] / 2, 60)
    best = None
    for b in grid:
        a, c, _ = _linear_fit(T, y, w, b)
        r = _residuals([a, c], T, y, w, Tc, yc, wc, b)
        sse = float(r @ r)
        if best is None or sse < best[0]:
            best = (sse, a, c, b)
    _, a, c, b = best
    res = optimize.least_squares(
        _residuals, [a, max(c, 1e-12), b], args=(T, y, w, Tc, yc, wc, None),
        bounds=([-np.inf, 0.0, beta_bounds[0]], [np.inf, np.inf, beta_bounds[1]]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    a, c, b = map(float, res.x)
    return a, c, b, c <= 0.0


def _split_cells(estimates):
    two = [e for e in estimates if e.successes >= 1 and e.trials > 0 and e.p_hat > 0]
    cens = [e for e in estimates if e.successes == 0 and e.trials > 0]
    return two, cens


def _weights(two):
    w = []
    for e in two:
        lo = max(e.lo, 1e-300)
        width = (math.log(max(e.hi, lo)) - math.log(lo)) / (2.0 * _Z95)
        w.append(1.0 / width if width > 0 else 1.0)
    return np.array(w)


def fit_scaling(estimates: Sequence[ProbabilityEstimate], fixed_beta: float | None = None,
                bootstrap: int = 200, seed: int = 0, level: float = 0.95,
                weighted: bool = True) -> ScalingFit:
    """Least-squares fit of ``ln p_hat(T) = a - c T**(-beta)``.

    Zero-success cells are interval-censored: they only require the model
    to stay below ``ln hi``. Intervals come from a parametric bootstrap
    that resamples every cell's count from ``Binomial(M, p_hat)``.
    """
    estimates = list(estimates)
    two, cens = _split_cells(estimates)
    need = 2 if fixed_beta is not None else 3
    if len(two) < need:
        raise FitError(f"need at least {need} cells with successes >= 1 for this fit, "
                       f"got {len(two)} (zero-success cells only bound the curve from above)")
    T = np.array([e.T for e in two])
    y = np.log([e.p_hat for e in two])
    w = _weights(two) if weighted else np.ones(len(two))
    Tc = np.array([e.T for e in cens])
    yc = np.log([e.hi for e in cens])
    a, c, b, active = fit_log_model(T, y, w, Tc, yc, fixed_beta)
    resid = [float(a - c * e.T ** (-b) - math.log(e.p_hat)) if e in two else
             float(max(0.0, a - c * e.T ** (-b) - math.log(e.hi))) for e in estimates]
    fit = ScalingFit(a=a, c=c, beta=b, beta_fixed=fixed_beta is not None,
                     used=[e in two for e in estimates], censored=[e in cens for e in estimates],
                     residuals=resid, constraint_active=active)
    if bootstrap > 0:
        _bootstrap(fit, estimates, fixed_beta, bootstrap, seed, level, weighted)
    return fit


def _bootstrap(fit, estimates, fixed_beta, reps, seed, level, weighted):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(7,))))
    draws, failures = [], 0
    for _ in range(reps):
        resampled = []
        for e in estimates:
            if e.trials <= 0:
                continue
            s = int(rng.binomial(e.trials, min(max(e.p_hat, 0.0), 1.0)))
            resampled.append(ProbabilityEstimate.from_counts(e.T, s, e.trials))
        try:
            f = fit_scaling(resampled, fixed_beta, bootstrap=0, weighted=weighted)
        except FitError:
            failures += 1
            continue
        draws.append((f.a, f.c, f.beta))
    fit.bootstrap_failures = failures
    if draws:
        arr = np.array(draws)
        q = [100 * (1 - level) / 2, 100 * (1 + level) / 2]
        for j, name in enumerate(("a", "c", "beta")):
            lo, hi = np.percentile(arr[:, j], q)
            fit.intervals[name] = [float(lo), float(hi)]
