"""Python interface to the fedhyp C++ core.

Geometry helpers operate on plain lists of floats; the simulator is driven
by the same JSON configuration text as the command-line tool.
"""

from ._fedhyp import (
    NumericalError,
    TrainingError,
    UsageError,
    apply_ablations,
    combined_score,
    confusion,
    default_config,
    distance,
    euclid_to_hyp,
    exp_map,
    hyperbolic_midpoint,
    in_ball,
    miou,
    mobius_add,
    mobius_scalar_mul,
    normalize_config,
    project_to_ball,
    run_simulation,
)

__all__ = [
    "NumericalError",
    "TrainingError",
    "UsageError",
    "apply_ablations",
    "combined_score",
    "confusion",
    "default_config",
    "distance",
    "euclid_to_hyp",
    "exp_map",
    "hyperbolic_midpoint",
    "in_ball",
    "miou",
    "mobius_add",
    "mobius_scalar_mul",
    "normalize_config",
    "project_to_ball",
    "run_simulation",
]
