"""Split-step simulation and Monte Carlo blow-up statistics for the focusing
stochastic NLS with conservative multiplicative noise."""
from .errors import (BudgetError, ConfigError, ContractViolation, DomainError, FitError,
                     SNLSError)
from .spectral import Field, GridSpec, h1_norm, lebesgue_norm, sobolev_w1p_norm
from .noise import NoiseIncrement, NoiseSpec, RngStream, sample_increment
from .integrator import (CutoffSpec, SolverConfig, TrajectoryOutcome, TrajectoryState,
                         evolve, initial_state, strang_step, theta_eval)
from .diagnostics import DiagnosticsRecorder, DiagnosticsRow, energy, mass, variance
from .montecarlo import (EnsembleConfig, ProbabilityEstimate, ScalingFit, fit_scaling,
                         run_ensemble, wilson_or_exact_interval)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BudgetError", "ConfigError", "ContractViolation", "DomainError", "FitError", "SNLSError",
    "Field", "GridSpec", "h1_norm", "lebesgue_norm", "sobolev_w1p_norm",
    "NoiseIncrement", "NoiseSpec", "RngStream", "sample_increment",
    "CutoffSpec", "SolverConfig", "TrajectoryOutcome", "TrajectoryState", "evolve",
    "initial_state", "strang_step", "theta_eval",
    "DiagnosticsRecorder", "DiagnosticsRow", "energy", "mass", "variance",
    "EnsembleConfig", "ProbabilityEstimate", "ScalingFit", "fit_scaling", "run_ensemble",
    "wilson_or_exact_interval", "BACKEND",
]
