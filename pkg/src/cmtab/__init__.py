"""Online optimization of multi-robot task allocation with unknown task rewards.

The package models a heterogeneous team (species-trait matrix plus robot
counts), learns one Gaussian-process trait-reward map per task, and picks
concurrent coalitions with an adaptive-discretization UCB bandit.
"""

from cmtab.problem import (
    FEAS_TOL,
    Team,
    aggregate_traits,
    denormalize,
    is_feasible_target,
    is_valid_assignment,
    normalize,
    trait_capacity,
)

__all__ = [
    "FEAS_TOL",
    "Team",
    "aggregate_traits",
    "denormalize",
    "is_feasible_target",
    "is_valid_assignment",
    "normalize",
    "trait_capacity",
]

__version__ = "0.1.0"
