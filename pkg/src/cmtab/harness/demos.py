"""Offline demonstrations: file format, validation and GP bootstrapping.

File format (JSON)::

    {"demonstrations": [
        {"X": [[1, 0], [0, 2]], "Q": [[0.3, 1.0], [0.8, 0.1]],
         "counts": [2, 3], "rewards": [0.7, 1.2]},
        ...
    ]}

``X`` must be valid for its own team (``counts``/``Q``), which may differ
from the team used online.  ``rewards`` holds one entry per task.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cmtab.gp import KernelConfig, TraitRewardModel, prior_from_demonstrations
from cmtab.problem import InvalidTeamError, Team, achieved_traits, is_valid_assignment


class DemonstrationError(ValueError):
    def __init__(self, index: int | None, msg: str):
        self.index = index
        super().__init__(msg if index is None else f"record {index}: {msg}")


@dataclass(frozen=True)
class Demonstration:
    X: np.ndarray
    team: Team
    rewards: np.ndarray

    @property
    def traits(self) -> np.ndarray:
        """Normalized task-trait matrix, using the demonstrating team's capacity."""
        return achieved_traits(self.X, self.team)

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "Q": self.team.traits.tolist(),
                "counts": self.team.counts.tolist(), "rewards": self.rewards.tolist()}


def parse_record(rec, index: int | None = None, M: int | None = None) -> Demonstration:
    if not isinstance(rec, dict):
        raise DemonstrationError(index, "record must be an object")
    missing = {"X", "Q", "counts", "rewards"} - rec.keys()
    if missing:
        raise DemonstrationError(index, f"missing fields {sorted(missing)}")
    try:
        team = Team(np.asarray(rec["counts"]), np.asarray(rec["Q"], dtype=float))
    except InvalidTeamError as exc:
        raise DemonstrationError(index, f"bad team: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise DemonstrationError(index, f"bad team: {exc}") from None
    try:
        X = np.asarray(rec["X"])
        rewards = np.asarray(rec["rewards"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise DemonstrationError(index, str(exc)) from None
    if X.ndim != 2 or X.shape[1] != team.n_species:
        raise DemonstrationError(index, f"X must be M x {team.n_species}")
    if not is_valid_assignment(X, team):
        raise DemonstrationError(index, "X is not a valid assignment for its team")
    if rewards.ndim != 1 or rewards.shape[0] != X.shape[0]:
        raise DemonstrationError(index, "need one reward per task (row of X)")
    if not np.all(np.isfinite(rewards)):
        raise DemonstrationError(index, "rewards must be finite")
    if M is not None and X.shape[0] != M:
        raise DemonstrationError(index, f"expected {M} tasks, got {X.shape[0]}")
    return Demonstration(X.astype(np.int64), team, rewards)


def parse_demonstrations(raw, M: int | None = None) -> list[Demonstration]:
    records = raw.get("demonstrations") if isinstance(raw, dict) else raw
    if not isinstance(records, list):
        raise DemonstrationError(None, "expected a list of demonstration records")
    demos = [parse_record(r, i, M) for i, r in enumerate(records)]
    if demos:
        shapes = {(d.X.shape[0], d.team.n_traits) for d in demos}
        if len(shapes) > 1:
            raise DemonstrationError(None, f"records disagree on (tasks, traits): {sorted(shapes)}")
    return demos


def ingest_demonstrations(path, M: int | None = None) -> list[Demonstration]:
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        return []
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DemonstrationError(None, f"not valid JSON: {exc}") from None
    return parse_demonstrations(raw, M)


def save_demonstrations(demos, path) -> None:
    Path(path).write_text(json.dumps({"demonstrations": [d.to_dict() for d in demos]},
                                     indent=1))


def bootstrap(demos, M: int, U: int, kernel: KernelConfig | None = None) -> list[TraitRewardModel]:
    """Per-task GP models conditioned on the demonstrations' (traits, reward) pairs."""
    pairs = [[] for _ in range(M)]
    for k, d in enumerate(demos):
        Y = d.traits
        if Y.shape != (M, U):
            raise DemonstrationError(k, f"traits shape {Y.shape} != {(M, U)}")
        for m in range(M):
            pairs[m].append((Y[m], d.rewards[m]))
    return [prior_from_demonstrations(pairs[m], kernel, U) for m in range(M)]


def synthesize_demonstrations(env, team: Team, n: int, rng: np.random.Generator,
                              good_fraction: float = 0.25) -> list[Demonstration]:
    """Mixed-quality demonstrations of ``team`` acting in ``env``.

    A ``good_fraction`` share are one-robot perturbations of the team's best
    assignment; the rest are uniformly random assignments.  Rewards carry the
    environment's observation noise.
    """
    from cmtab.environment import optimal_total_reward

    M, S = env.M, team.n_species
    best = optimal_total_reward(env, team).X
    n_good = int(round(good_fraction * n))
    out = []
    for k in range(n):
        if k < n_good:
            X = best.copy()
            if k > 0:
                s = int(rng.integers(S))
                src = int(rng.integers(M))
                if X[src, s] > 0:
                    X[src, s] -= 1
                    dst = int(rng.integers(M + 1))
                    if dst < M:
                        X[dst, s] += 1
        else:
            X = np.zeros((M, S), dtype=np.int64)
            for s in range(S):
                dest = rng.integers(0, M + 1, size=int(team.counts[s]))
                X[:, s] = np.bincount(dest, minlength=M + 1)[:M]
        noisy, _, _ = env.evaluate(achieved_traits(X, team), rng)
        out.append(Demonstration(X, team, np.asarray(noisy, dtype=float)))
    return out
