"""Free-boundary rescaling laboratory."""

from ._core import (
    ball_volume,
    center_velocity,
    gram_constant,
    kappa,
    project,
    run_json,
    sphere_area,
    sphere_nodes,
    synthetic_moments,
    verify,
)

__all__ = [
    "ball_volume",
    "center_velocity",
    "gram_constant",
    "kappa",
    "project",
    "run_json",
    "sphere_area",
    "sphere_nodes",
    "synthetic_moments",
    "verify",
]
