"""Experiment configuration (JSON) and team generation.

Schema (every key optional except where noted)::

    {
      "name": "sweep",
      "seed": 0,                              # master seed
      "environment": {"preset": "synthetic", "overrides": {"noise_std": 0.05}},
      "teams": {"random": {"n_teams": 6, "S": 4, "count_range": [1, 10]}},
         # or {"explicit": [{"counts": [...], "Q": [[...], ...]}, ...]}
      "strategies": ["CMTAB", "FD", "IA", "US"],
      "iterations": 400,
      "horizon": null,                        # N in the confidence radius; null -> iterations
      "rounds": 5,
      "cmtab": {"grid_resolution": 5, "neighborhood_size": 10, "beta": null,
                "beta_delta": 0.1, "node_budget": 1000000},
      "kernel": {"lengthscale": 0.2, "signal_variance": 1.0, "noise_variance": 0.01},
      "demonstrations": null,                 # path, relative to the config file
      "output_dir": "runs/sweep",             # relative to the config file
      "workers": 1
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from cmtab.baselines import StrategyKind
from cmtab.environment import EnvironmentPreset, get_preset
from cmtab.gp import KernelConfig
from cmtab.optimizer import CmtabConfig
from cmtab.problem import Team

# purposes for hierarchical seeding
SEED_TEAM, SEED_ENV, SEED_NOISE, SEED_STRATEGY, SEED_DEMO = range(5)


class ConfigError(ValueError):
    pass


def derive_seed(master: int, purpose: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(purpose), *map(int, path)])


def rng_for(master: int, purpose: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, purpose, *path))


def generate_random_team(S: int, U: int, count_range=(1, 10), seed=None) -> Team:
    """Counts uniform on ``count_range`` (inclusive), traits uniform on [0, 1]."""
    lo, hi = int(count_range[0]), int(count_range[1])
    if S < 1 or U < 1 or lo < 0 or hi < lo or hi < 1:
        raise ConfigError(f"invalid team ranges S={S} U={U} counts={count_range}")
    rng = np.random.default_rng(seed)
    counts = rng.integers(lo, hi + 1, size=S)
    while not counts.any():
        counts = rng.integers(lo, hi + 1, size=S)
    Q = rng.uniform(0.0, 1.0, size=(S, U))
    # a trait nobody present has would have zero capacity: give it to someone
    for u in range(U):
        if not np.any(counts * Q[:, u] > 0):
            s = int(np.flatnonzero(counts)[0])
            Q[s, u] = rng.uniform(0.5, 1.0)
    return Team(counts, Q)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    environment: dict = field(default_factory=lambda: {"preset": "synthetic"})
    teams: dict = field(default_factory=lambda: {
        "random": {"n_teams": 6, "S": 4, "count_range": [1, 10]}})
    strategies: list = field(default_factory=lambda: [k.value for k in StrategyKind])
    iterations: int = 400
    horizon: int | None = None
    rounds: int = 5
    cmtab: CmtabConfig = field(default_factory=CmtabConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    demonstrations: str | None = None
    output_dir: str | None = None
    workers: int = 1
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.horizon is not None and self.horizon < self.iterations:
            raise ConfigError("horizon must be >= iterations")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.strategies = [StrategyKind.parse(s).value for s in self.strategies]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.strategies:
            raise ConfigError("no strategies selected")
        if not isinstance(self.teams, dict) or not ({"random", "explicit"} & self.teams.keys()):
            raise ConfigError("teams needs a 'random' or 'explicit' section")
        self.preset  # validates the environment section

    @property
    def preset(self) -> EnvironmentPreset:
        env = self.environment or {}
        try:
            return get_preset(env.get("preset", "synthetic"), **env.get("overrides", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad environment section: {exc}") from None

    @property
    def effective_horizon(self) -> int:
        # the confidence radius needs log N > 0
        n = self.iterations if self.horizon is None else self.horizon
        return max(n, 2)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def build_teams(self) -> list[Team]:
        """Teams in config order (callers reorder by optimum for reporting)."""
        U = self.preset.U
        if "explicit" in self.teams:
            try:
                teams = [Team.from_dict(t) for t in self.teams["explicit"]]
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad explicit team: {exc}") from None
            for t in teams:
                if t.n_traits != U:
                    raise ConfigError(f"team has {t.n_traits} traits, environment needs {U}")
            return teams
        spec = self.teams["random"]
        n = int(spec.get("n_teams", 6))
        S = int(spec.get("S", 4))
        rng_range = spec.get("count_range", [1, 10])
        return [generate_random_team(S, U, rng_range, derive_seed(self.seed, SEED_TEAM, k))
                for k in range(n)]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if hasattr(v, "to_dict") else v
        return out

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if "cmtab" in d:
                d["cmtab"] = CmtabConfig(**d["cmtab"])
            if "kernel" in d:
                d["kernel"] = KernelConfig(**d["kernel"])
            return cls(**d, base_dir=Path(base_dir))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw, path.parent)
