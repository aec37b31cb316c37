"""Concurrent multi-task adaptive bandit (CMTAB) arm selection.

The arm space is the set of feasible ``M x U`` normalized task-trait
matrices.  A coarse grid of them is fixed up front; every iteration each
grid candidate is scored by the average UCB value over ``N_f`` random
feasible points in a neighborhood whose size shrinks with the number of
times the candidate was picked, plus ``M`` times its confidence radius.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from cmtab.gp import TraitRewardModel
from cmtab.problem import FEAS_TOL, Team, achieved_traits, feasible_mask
from cmtab.solver import DEFAULT_NODE_BUDGET, SolveResult, solve_allocation

REJECTION_TRIES = 50


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class CmtabConfig:
    grid_resolution: int = 5
    neighborhood_size: int = 10
    beta: float | None = None  # constant override; None -> schedule
    beta_delta: float = 0.1
    rng_seed: int = 0
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ConfigurationError("grid_resolution must be >= 2")
        if self.neighborhood_size < 1:
            raise ConfigurationError("neighborhood_size must be >= 1")
        if self.beta is not None and self.beta < 0:
            raise ConfigurationError("beta must be nonnegative")
        if not 0 < self.beta_delta < 1:
            raise ConfigurationError("beta_delta must be in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CandidateSet:
    """Fixed coarse candidates (``C x M x U``) and how often each was picked."""

    candidates: np.ndarray
    counts: np.ndarray
    horizon: int
    grid_resolution: int = 2

    def __len__(self):
        return self.candidates.shape[0]

    @property
    def iterations(self) -> int:
        return int(self.counts.sum())

    def task_rows(self):
        """Per task: the distinct candidate rows and each candidate's row index."""
        cached = getattr(self, "_task_rows", None)
        if cached is None:
            cached = [np.unique(self.candidates[:, m, :], axis=0, return_inverse=True)
                      for m in range(self.candidates.shape[1])]
            cached = [(rows, inv.ravel()) for rows, inv in cached]
            self._task_rows = cached
        return cached

    def record_sample(self, index: int) -> "CandidateSet":
        if not 0 <= index < len(self):
            raise IndexError(f"candidate index {index} out of range")
        self.counts[index] += 1
        return self


def _grid_levels(d: int, U: int) -> np.ndarray:
    return np.array(list(itertools.product(range(d), repeat=U)), dtype=np.int64)


def build_candidate_set(team: Team | None, M: int, cfg: CmtabConfig, horizon: int,
                        U: int | None = None) -> CandidateSet:
    """All ``M``-tuples of grid points ``{0, 1/(d-1), ..., 1}^U`` whose trait
    columns sum to at most one.

    Candidates are ordered lexicographically by the tuple of per-task grid
    indices.  ``team`` only fixes ``U``; pass ``U`` directly when no team is
    involved (the per-task grids of the IA baseline).
    """
    if U is None:
        if team is None:
            raise ConfigurationError("need a team or an explicit trait count")
        U = team.n_traits
    if M < 1:
        raise ConfigurationError("need at least one task")
    if horizon < 2:
        raise ConfigurationError("horizon must be >= 2")
    d = cfg.grid_resolution
    top = d - 1
    # feasible trait columns: M integer levels summing to at most d-1
    cols = np.array([c for c in itertools.product(range(d), repeat=M) if sum(c) <= top],
                    dtype=np.int64).reshape(-1, M)
    if len(cols) == 0:
        raise ConfigurationError("no feasible candidate allocations")
    combo = np.array(list(itertools.product(range(len(cols)), repeat=U)), dtype=np.int64)
    levels = np.stack([cols[combo[:, u]] for u in range(U)], axis=2)  # C x M x U
    # per-task grid index, task 0 most significant
    row_idx = (levels * (d ** np.arange(U - 1, -1, -1))).sum(axis=2)  # C x M
    order = np.lexsort(row_idx.T[::-1])
    cands = levels[order].astype(float) / top
    return CandidateSet(cands, np.zeros(len(cands), dtype=np.int64), int(horizon), d)


def confidence_radius(n_samples, horizon: int):
    """``sqrt(2 ln N / (n + 1))``; vectorizes over ``n_samples``."""
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    return np.sqrt(2.0 * math.log(horizon) / (np.asarray(n_samples, dtype=float) + 1.0))


def radius_scale(grid_resolution: int, horizon: int) -> float:
    """Trait-space half-width per unit of confidence radius.

    Chosen so a never-sampled candidate's neighborhood spans half a grid cell.
    """
    return 1.0 / (2.0 * (grid_resolution - 1) * math.sqrt(2.0 * math.log(horizon)))


def project_columns(Ys: np.ndarray) -> np.ndarray:
    """Scale every trait column whose sum exceeds one back onto the budget."""
    sums = Ys.sum(axis=-2, keepdims=True)
    return Ys / np.maximum(sums, 1.0)


def sample_neighborhoods(Ys, half_widths, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """``n_points`` feasible matrices around each ``Ys[c]`` (first one is ``Ys[c]``).

    Entries are perturbed uniformly within ``half_widths[c]`` (L-inf ball),
    clipped to [0, 1] and rejection-sampled for feasibility; points still
    infeasible after ``REJECTION_TRIES`` rounds are projected.
    """
    Ys = np.asarray(Ys, dtype=float)
    C, M, U = Ys.shape
    hw = np.asarray(half_widths, dtype=float).reshape(C, 1, 1, 1)
    out = np.repeat(Ys[:, None], n_points, axis=1)
    if n_points == 1:
        return out
    base = out[:, 1:]
    pending = np.ones(base.shape[:2], dtype=bool) & (hw[:, :, 0, 0] > 0)
    for _ in range(REJECTION_TRIES):
        if not pending.any():
            break
        c_idx, j_idx = np.nonzero(pending)
        noise = rng.uniform(-1.0, 1.0, size=(len(c_idx), M, U))
        trial = np.clip(Ys[c_idx] + noise * hw[c_idx, 0], 0.0, 1.0)
        ok = feasible_mask(trial)
        base[c_idx[ok], j_idx[ok]] = trial[ok]
        pending[c_idx[ok], j_idx[ok]] = False
        last_trial = (c_idx, j_idx, trial)
    if pending.any():
        c_idx, j_idx, trial = last_trial
        still = pending[c_idx, j_idx]
        base[c_idx[still], j_idx[still]] = project_columns(trial[still])
    out[:, 1:] = base
    return out


def sample_neighborhood(Y, radius: float, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Single-candidate version of :func:`sample_neighborhoods`; ``radius`` is
    the half-width in normalized trait units."""
    Y = np.asarray(Y, dtype=float)
    return sample_neighborhoods(Y[None], [radius], n_points, rng)[0]


def point_utilities(models, points: np.ndarray, beta: float) -> np.ndarray:
    """``sum_m mu_m + beta * sigma_m`` for every matrix in a ``(..., M, U)`` stack."""
    points = np.asarray(points, dtype=float)
    lead, (M, U) = points.shape[:-2], points.shape[-2:]
    flat = points.reshape(-1, M, U)
    total = np.zeros(flat.shape[0])
    for m, model in enumerate(models):
        mean, var = model.predict_many(flat[:, m, :])
        total += mean + beta * np.sqrt(var)
    return total.reshape(lead)


def candidate_utilities(state: CandidateSet, models, beta: float) -> np.ndarray:
    """:func:`point_utilities` of the candidates themselves, predicting each
    distinct grid row once."""
    total = np.zeros(len(state))
    for model, (rows, inverse) in zip(models, state.task_rows()):
        mean, var = model.predict_many(rows)
        total += (mean + beta * np.sqrt(var))[inverse]
    return total


def estimated_utility(models, neighborhood, beta: float) -> float:
    neighborhood = np.asarray(neighborhood, dtype=float)
    if neighborhood.shape[0] == 0:
        raise ValueError("empty neighborhood")
    return float(np.mean(point_utilities(models, neighborhood, beta)))


def beta(i: int, cfg: CmtabConfig, n_candidates: int) -> float:
    """Exploration weight at iteration ``i`` (1-based).

    Default follows the GP-UCB finite-arm schedule
    ``sqrt(2 ln(|C| i^2 pi^2 / (6 delta)))``.
    """
    if i < 1:
        raise ValueError("iterations are 1-based")
    if cfg.beta is not None:
        return float(cfg.beta)
    return math.sqrt(2.0 * math.log(n_candidates * i * i * math.pi**2 / (6.0 * cfg.beta_delta)))


@dataclass
class Selection:
    index: int
    target: np.ndarray
    scores: np.ndarray = field(repr=False)
    utilities: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)


def select_target(state: CandidateSet, models, cfg: CmtabConfig, i: int,
                  rng: np.random.Generator, zooming: bool = True) -> Selection:
    """Pick the candidate maximizing ``zeta + M * gamma`` and return the best
    point of its neighborhood.

    With ``zooming=False`` neighborhoods collapse onto the candidates
    themselves (fixed discretization).
    """
    C, M, U = state.candidates.shape
    if len(models) != M:
        raise ValueError(f"expected {M} task models, got {len(models)}")
    b = beta(i, cfg, C)
    gamma = confidence_radius(state.counts, state.horizon)
    if zooming:
        hw = gamma * radius_scale(state.grid_resolution, state.horizon)
        neigh = sample_neighborhoods(state.candidates, hw, cfg.neighborhood_size, rng)
        point_u = np.empty(neigh.shape[:2])  # C x N_f
        point_u[:, 0] = candidate_utilities(state, models, b)
        point_u[:, 1:] = point_utilities(models, neigh[:, 1:], b)
    else:
        neigh = state.candidates[:, None]
        point_u = candidate_utilities(state, models, b)[:, None]
    zeta = point_u.mean(axis=1)
    scores = zeta + M * gamma
    winner = int(np.argmax(scores))
    j = int(np.argmax(point_u[winner]))
    return Selection(winner, neigh[winner, j].copy(), scores, zeta, gamma)


def record_sample(state: CandidateSet, index: int) -> CandidateSet:
    return state.record_sample(index)


@dataclass
class StepOutcome:
    X: np.ndarray
    target: np.ndarray
    achieved: np.ndarray
    candidate: int
    solve: SolveResult


def step(models, state: CandidateSet, cfg: CmtabConfig, i: int, team: Team,
         rng: np.random.Generator) -> StepOutcome:
    """One iteration: select a target, solve for robots, book the sample.

    Callers should feed ``achieved`` (not ``target``) back to the models.
    """
    sel = select_target(state, models, cfg, i, rng)
    res = solve_allocation(sel.target, team, cfg.node_budget)
    state.record_sample(sel.index)
    return StepOutcome(res.X, sel.target, achieved_traits(res.X, team), sel.index, res)


def empty_models(M: int, U: int, kernel) -> list[TraitRewardModel]:
    return [TraitRewardModel(kernel, U) for _ in range(M)]


__all__ = [
    "CandidateSet", "CmtabConfig", "ConfigurationError", "FEAS_TOL", "Selection",
    "StepOutcome", "beta", "build_candidate_set", "candidate_utilities", "confidence_radius",
    "empty_models", "estimated_utility", "point_utilities", "project_columns",
    "radius_scale", "record_sample", "sample_neighborhood", "sample_neighborhoods",
    "select_target", "step",
]
