"""Discrete repeated-measurement trajectory models and their continuous limits.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports its operations.  Matrices cross the boundary as nested lists of
complex numbers, scenarios as the same JSON documents the ``belavkin-lab``
CLI reads.
"""

from ._core import (
    ModelError,
    derive_constants,
    eigenvalues,
    matrix_exp,
    model_digest,
    run_experiment,
    schema_version,
    simulate_trajectory,
    validate_density,
)

__all__ = [
    "ModelError",
    "derive_constants",
    "eigenvalues",
    "matrix_exp",
    "model_digest",
    "run_experiment",
    "schema_version",
    "simulate_trajectory",
    "validate_density",
]
