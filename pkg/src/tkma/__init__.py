"""Two-step KM iteration with adaptive momentum, its baselines, and the
denoising and matrix completion problems used to race them."""

from .core import (Algorithm, HalpernMode, IterRecord, Operator, RunTrace, SolverConfig,
                   StepState, ZeroResidual, adaptive_theta, fast_km_step, halpern_step,
                   km_step, optimal_theta, picard_step, run, tkma_step)

__all__ = [
    "Algorithm", "HalpernMode", "IterRecord", "Operator", "RunTrace", "SolverConfig",
    "StepState", "ZeroResidual", "adaptive_theta", "fast_km_step", "halpern_step",
    "km_step", "optimal_theta", "picard_step", "run", "tkma_step",
]
__version__ = "0.1.0"
