"""Python interface to the degbill C++ library."""

from ._degbill import (
    CollisionError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    Error,
    GeometryError,
    IntegrationError,
    ScenarioError,
    connect_free,
    entropy,
    kepler_J,
    kepler_J_dh,
    path_count,
    reflect,
    run_scenario,
    solve_kepler,
    three_body_lagrangian,
    variational_check,
)

__all__ = [
    "CollisionError",
    "ConvergenceError",
    "DegeneracyError",
    "DomainError",
    "Error",
    "GeometryError",
    "IntegrationError",
    "ScenarioError",
    "connect_free",
    "entropy",
    "kepler_J",
    "kepler_J_dh",
    "path_count",
    "reflect",
    "run_scenario",
    "solve_kepler",
    "three_body_lagrangian",
    "variational_check",
]
