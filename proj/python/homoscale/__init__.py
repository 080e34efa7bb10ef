"""Multiscale diffusion homogenization: simulation, effective coefficients, experiments."""

from ._homoscale import (
    ConfigError,
    NumericalError,
    PreconditionError,
    effective,
    lyapunov_residual,
    preset_defaults,
    preset_names,
    run_experiment,
    simulate,
    solve_lyapunov,
    torus_effective,
    zvonkin,
)

__all__ = [
    "ConfigError",
    "NumericalError",
    "PreconditionError",
    "effective",
    "lyapunov_residual",
    "preset_defaults",
    "preset_names",
    "run_experiment",
    "simulate",
    "solve_lyapunov",
    "torus_effective",
    "zvonkin",
]
