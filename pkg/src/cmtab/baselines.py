"""Arm-selection strategies: CMTAB and the three ablations.

All strategies emit a feasible normalized target each iteration and share
the same allocation solver downstream.

* FD - fixed discretization: CMTAB scoring with zero-radius neighborhoods.
* IA - adaptive discretization per task, tasks chosen independently and the
  stacked target scaled back into budget.
* US - uniform random targets, never looks at the models.
"""

from __future__ import annotations

import enum

import numpy as np

from cmtab.gp import KernelConfig, TraitRewardModel
from cmtab.optimizer import (
    CandidateSet,
    CmtabConfig,
    Selection,
    build_candidate_set,
    project_columns,
    select_target,
)
from cmtab.problem import Team

US_REJECTION_TRIES = 100


class StrategyKind(str, enum.Enum):
    CMTAB = "CMTAB"
    FD = "FD"
    IA = "IA"
    US = "US"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        try:
            return cls(name.upper())
        except ValueError:
            raise ValueError(f"unknown strategy {name!r}; choose from "
                             f"{[k.value for k in cls]}") from None


def fd_select(models, state: CandidateSet, cfg: CmtabConfig, i: int,
              rng: np.random.Generator | None = None) -> Selection:
    return select_target(state, models, cfg, i, rng, zooming=False)


def ia_select(models, states: list[CandidateSet], cfg: CmtabConfig, i: int,
              rng: np.random.Generator) -> tuple[np.ndarray, list[int]]:
    """Independent single-task selections stacked into one target."""
    rows, picks = [], []
    for model, state in zip(models, states):
        sel = select_target(state, [model], cfg, i, rng)
        rows.append(sel.target[0])
        picks.append(sel.index)
    Y = np.vstack(rows)
    return project_columns(Y), picks


def us_select(M: int, U: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the feasible set ``{Y >= 0, column sums <= 1}``.

    The set is a product over trait columns, so each column is rejection
    sampled on its own; a column that keeps failing is drawn directly from the
    flat Dirichlet (same uniform law, no rejection).
    """
    Y = np.empty((M, U))
    for u in range(U):
        for _ in range(US_REJECTION_TRIES):
            col = rng.uniform(0.0, 1.0, size=M)
            if col.sum() <= 1.0:
                break
        else:
            col = rng.dirichlet(np.ones(M + 1))[:M]
        Y[:, u] = col
    return Y


class Strategy:
    """Common loop interface: ``propose`` a target, then ``feedback``."""

    kind: StrategyKind
    uses_models = True

    def __init__(self, team: Team, M: int, horizon: int, cfg: CmtabConfig,
                 kernel: KernelConfig, rng: np.random.Generator,
                 models: list[TraitRewardModel] | None = None):
        self.team, self.M, self.U = team, M, team.n_traits
        self.horizon, self.cfg, self.kernel, self.rng = horizon, cfg, kernel, rng
        if models is None:
            models = [TraitRewardModel(kernel, self.U) for _ in range(M)]
        if len(models) != M:
            raise ValueError(f"expected {M} models, got {len(models)}")
        self.models = models

    def propose(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def feedback(self, achieved: np.ndarray, rewards: np.ndarray) -> None:
        if not self.uses_models:
            return
        for m, model in enumerate(self.models):
            model.observe(achieved[m], float(rewards[m]))


class CmtabStrategy(Strategy):
    kind = StrategyKind.CMTAB
    zooming = True

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.state = build_candidate_set(self.team, self.M, self.cfg, self.horizon)

    def propose(self, i: int) -> np.ndarray:
        sel = select_target(self.state, self.models, self.cfg, i, self.rng,
                            zooming=self.zooming)
        self.state.record_sample(sel.index)
        self.last_selection = sel
        return sel.target


class FixedDiscretizationStrategy(CmtabStrategy):
    kind = StrategyKind.FD
    zooming = False


class IndividualAdaptiveStrategy(Strategy):
    kind = StrategyKind.IA

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.states = [build_candidate_set(None, 1, self.cfg, self.horizon, U=self.U)
                       for _ in range(self.M)]

    def propose(self, i: int) -> np.ndarray:
        Y, picks = ia_select(self.models, self.states, self.cfg, i, self.rng)
        for state, idx in zip(self.states, picks):
            state.record_sample(idx)
        return Y


class UniformSamplingStrategy(Strategy):
    kind = StrategyKind.US
    uses_models = False

    def propose(self, i: int) -> np.ndarray:
        return us_select(self.M, self.U, self.rng)


STRATEGIES = {
    StrategyKind.CMTAB: CmtabStrategy,
    StrategyKind.FD: FixedDiscretizationStrategy,
    StrategyKind.IA: IndividualAdaptiveStrategy,
    StrategyKind.US: UniformSamplingStrategy,
}


def make_strategy(kind, *args, **kwargs) -> Strategy:
    if not isinstance(kind, StrategyKind):
        kind = StrategyKind.parse(kind)
    return STRATEGIES[kind](*args, **kwargs)
