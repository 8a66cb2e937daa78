"""Certified MPC-guided Q-learning with a Lipschitz safety filter for an aeroelastic wing."""

from mpcrl._core import (
    ConfigError,
    Deployment,
    DomainError,
    Plant,
    RunConfig,
    dryden_gust,
    evaluate,
    safe_bounds,
    solve_mpc,
    train,
    validate_model,
)

__all__ = [
    "ConfigError",
    "Deployment",
    "DomainError",
    "Plant",
    "RunConfig",
    "dryden_gust",
    "evaluate",
    "safe_bounds",
    "solve_mpc",
    "train",
    "validate_model",
]
