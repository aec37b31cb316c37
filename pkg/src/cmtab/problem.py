"""Teams, assignments and the trait algebra tying them together.

Conventions used across the package:

* ``Q`` is the ``S x U`` species-trait matrix, ``counts`` the robots per species.
* An assignment ``X`` is an ``M x S`` integer matrix (robots of species ``s``
  on task ``m``).  Robots left out of every task are allowed.
* A task-trait matrix ``Y`` is ``M x U``.  Everything past the ingestion
  boundary works in normalized units, where column ``u`` is divided by the
  team's total amount of trait ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-9


class InvalidTeamError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Team:
    """A heterogeneous team: ``counts[s]`` robots of species ``s``, each with
    trait vector ``traits[s]``.

    Arrays are copied and made read-only, so a Team can be shared freely.
    """

    counts: np.ndarray
    traits: np.ndarray
    trait_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        traits = np.asarray(self.traits, dtype=float)
        if counts.ndim != 1:
            raise InvalidTeamError("counts must be a 1-D integer vector")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise InvalidTeamError("counts must be integers")
        counts = counts.astype(np.int64)
        if traits.ndim != 2 or traits.shape[0] != counts.shape[0]:
            raise InvalidTeamError(
                f"traits must be S x U with S={counts.shape[0]}, got shape {traits.shape}"
            )
        if traits.shape[1] == 0 or counts.shape[0] == 0:
            raise InvalidTeamError("team needs at least one species and one trait")
        if not np.all(np.isfinite(traits)):
            raise InvalidTeamError("traits must be finite")
        if np.any(counts < 0) or np.any(traits < 0):
            raise InvalidTeamError("counts and traits must be nonnegative")
        if not np.any(counts > 0):
            raise InvalidTeamError("team has no robots")
        cap = counts @ traits
        if np.any(cap <= 0):
            bad = np.flatnonzero(cap <= 0).tolist()
            raise InvalidTeamError(f"traits {bad} have zero team capacity")
        if self.trait_names is not None and len(self.trait_names) != traits.shape[1]:
            raise InvalidTeamError("trait_names length must equal U")
        object.__setattr__(self, "counts", _frozen(counts))
        object.__setattr__(self, "traits", _frozen(traits))
        object.__setattr__(self, "_capacity", _frozen(cap))

    @property
    def n_species(self) -> int:
        return self.traits.shape[0]

    @property
    def n_traits(self) -> int:
        return self.traits.shape[1]

    @property
    def capacity(self) -> np.ndarray:
        return self._capacity

    @property
    def normalized_traits(self) -> np.ndarray:
        """Per-robot traits in normalized units (``Q / capacity``)."""
        return self.traits / self._capacity

    def __eq__(self, other):
        if not isinstance(other, Team):
            return NotImplemented
        return (
            np.array_equal(self.counts, other.counts)
            and np.array_equal(self.traits, other.traits)
            and self.trait_names == other.trait_names
        )

    def __hash__(self):
        return hash((self.counts.tobytes(), self.traits.tobytes()))

    def to_dict(self) -> dict:
        d = {"counts": self.counts.tolist(), "Q": self.traits.tolist()}
        if self.trait_names is not None:
            d["trait_names"] = list(self.trait_names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Team":
        try:
            counts, q = d["counts"], d["Q"]
        except (KeyError, TypeError) as exc:
            raise InvalidTeamError("team record needs 'counts' and 'Q'") from exc
        names = d.get("trait_names")
        return cls(np.asarray(counts), np.asarray(q, dtype=float),
                   tuple(names) if names is not None else None)


def _check_assignment_shape(X: np.ndarray, team: Team) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != team.n_species:
        raise ValueError(
            f"assignment must be M x {team.n_species}, got shape {X.shape}"
        )
    return X


def aggregate_traits(X, team: Team) -> np.ndarray:
    """Raw task-trait matrix ``X @ Q``."""
    X = _check_assignment_shape(X, team)
    return X @ team.traits


def trait_capacity(team: Team) -> np.ndarray:
    """Total amount of each trait in the team (``counts @ Q``)."""
    return team.capacity.copy()


def normalize(Y_raw, team: Team) -> np.ndarray:
    Y_raw = np.asarray(Y_raw, dtype=float)
    if Y_raw.shape[-1] != team.n_traits:
        raise ValueError(f"expected {team.n_traits} trait columns, got {Y_raw.shape[-1]}")
    return Y_raw / team.capacity


def denormalize(Y, team: Team) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.shape[-1] != team.n_traits:
        raise ValueError(f"expected {team.n_traits} trait columns, got {Y.shape[-1]}")
    return Y * team.capacity


def achieved_traits(X, team: Team) -> np.ndarray:
    """Normalized task-trait matrix produced by deploying ``X``."""
    return normalize(aggregate_traits(X, team), team)


def is_feasible_target(Y, tol: float = FEAS_TOL) -> bool:
    """True when every trait column of a normalized ``Y`` sums to at most 1.

    Works on a single ``M x U`` matrix; use :func:`feasible_mask` for stacks.
    """
    Y = np.asarray(Y, dtype=float)
    return bool(np.all(Y.sum(axis=-2) <= 1.0 + tol))


def feasible_mask(Ys, tol: float = FEAS_TOL) -> np.ndarray:
    """Vectorized :func:`is_feasible_target` over a ``(..., M, U)`` stack."""
    return np.all(np.asarray(Ys).sum(axis=-2) <= 1.0 + tol, axis=-1)


def is_valid_assignment(X, team: Team) -> bool:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != team.n_species:
        return False
    if not np.all(np.equal(np.mod(X, 1), 0)) or np.any(X < 0):
        return False
    return bool(np.all(X.sum(axis=0) <= team.counts))


def assignment_from_list(rows: Sequence[Sequence[int]], team: Team | None = None) -> np.ndarray:
    X = np.asarray(rows)
    if X.ndim != 2 or not np.all(np.equal(np.mod(X, 1), 0)) or np.any(X < 0):
        raise ValueError("assignment must be a nested list of nonnegative integers")
    X = X.astype(np.int64)
    if team is not None and not is_valid_assignment(X, team):
        raise ValueError("assignment exceeds the team's robot counts")
    return X
