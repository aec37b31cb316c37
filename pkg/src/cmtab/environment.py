"""Synthetic ground-truth trait-reward maps and their optimum.

Each task's reward surface is a nonnegative mixture of Gaussian bumps over
the normalized trait cube plus a small baseline.  Observations add i.i.d.
Gaussian noise drawn from a generator the caller owns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from cmtab.problem import Team, normalize

ORACLE_BUDGET = 200_000_000


@dataclass(frozen=True)
class EnvironmentPreset:
    name: str
    M: int
    U: int
    n_bumps: tuple[int, int] = (2, 5)
    width_range: tuple[float, float] = (0.1, 0.4)
    weight_range: tuple[float, float] = (0.5, 2.0)
    baseline: float = 0.1
    noise_std: float = 0.05
    # optional per-task, per-trait (low, high) bounds for bump centers
    center_ranges: tuple | None = None
    trait_names: tuple[str, ...] | None = None
    task_names: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name, "M": self.M, "U": self.U,
            "n_bumps": list(self.n_bumps), "width_range": list(self.width_range),
            "weight_range": list(self.weight_range), "baseline": self.baseline,
            "noise_std": self.noise_std,
            "center_ranges": None if self.center_ranges is None
            else [[list(r) for r in task] for task in self.center_ranges],
            "trait_names": None if self.trait_names is None else list(self.trait_names),
            "task_names": None if self.task_names is None else list(self.task_names),
        }


_LOW, _MID, _HIGH = (0.0, 0.25), (0.15, 0.55), (0.3, 0.75)

PRESETS: dict[str, EnvironmentPreset] = {
    "synthetic-v1": EnvironmentPreset("synthetic-v1", M=3, U=3),
    "emergency-response-v1": EnvironmentPreset(
        "emergency-response-v1", M=3, U=4,
        trait_names=("speed", "water_capacity", "payload_capacity", "sensing_radius"),
        task_names=("fire_fighting", "debris_removal", "coverage"),
        center_ranges=(
            (_MID, _HIGH, _LOW, _LOW),
            (_MID, _LOW, _HIGH, _LOW),
            (_MID, _LOW, _LOW, _HIGH),
        ),
    ),
}
PRESETS["synthetic"] = PRESETS["synthetic-v1"]
PRESETS["emergency-response"] = PRESETS["emergency-response-v1"]


def get_preset(name: str, **overrides) -> EnvironmentPreset:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown environment preset {name!r}; "
                         f"known: {sorted(PRESETS)}") from None
    if not overrides:
        return base
    fields = base.__dict__ | overrides
    for key in ("n_bumps", "width_range", "weight_range"):
        fields[key] = tuple(fields[key])
    return EnvironmentPreset(**fields)


@dataclass
class TaskSurface:
    centers: np.ndarray  # K x U
    widths: np.ndarray  # K
    weights: np.ndarray  # K
    baseline: float

    def __call__(self, Ys) -> np.ndarray:
        Ys = np.asarray(Ys, dtype=float)
        d2 = np.sum((Ys[..., None, :] - self.centers) ** 2, axis=-1)
        return self.baseline + np.exp(-0.5 * d2 / self.widths**2) @ self.weights


@dataclass
class GroundTruthEnvironment:
    surfaces: list[TaskSurface]
    noise_std: float
    preset: EnvironmentPreset | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.surfaces)

    @property
    def U(self) -> int:
        return self.surfaces[0].centers.shape[1]

    def true_rewards(self, Y) -> np.ndarray:
        """Noise-free per-task rewards ``f_m(y_m)``; accepts ``(..., M, U)``."""
        Y = np.asarray(Y, dtype=float)
        return np.stack([f(Y[..., m, :]) for m, f in enumerate(self.surfaces)], axis=-1)

    def evaluate(self, Y, rng: np.random.Generator):
        """Noisy per-task rewards, their total, and the true total."""
        true = self.true_rewards(Y)
        noisy = true + (rng.normal(0.0, self.noise_std, size=true.shape)
                        if self.noise_std > 0 else 0.0)
        return noisy, float(np.sum(noisy)), float(np.sum(true))

    def to_dict(self) -> dict:
        return {
            "preset": self.preset.to_dict() if self.preset else None,
            "seed": self.seed,
            "noise_std": self.noise_std,
            "surfaces": [
                {"centers": s.centers.tolist(), "widths": s.widths.tolist(),
                 "weights": s.weights.tolist(), "baseline": s.baseline}
                for s in self.surfaces
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthEnvironment":
        surfaces = [
            TaskSurface(np.asarray(s["centers"], float), np.asarray(s["widths"], float),
                        np.asarray(s["weights"], float), float(s["baseline"]))
            for s in d["surfaces"]
        ]
        preset = None
        if d.get("preset"):
            p = dict(d["preset"])
            for key in ("n_bumps", "width_range", "weight_range", "trait_names", "task_names"):
                if p.get(key) is not None:
                    p[key] = tuple(p[key])
            if p.get("center_ranges") is not None:
                p["center_ranges"] = tuple(tuple(tuple(r) for r in t) for t in p["center_ranges"])
            preset = EnvironmentPreset(**p)
        return cls(surfaces, float(d["noise_std"]), preset, d.get("seed"))


def generate_environment(preset: EnvironmentPreset, seed) -> GroundTruthEnvironment:
    rng = np.random.default_rng(seed)
    lo_k, hi_k = preset.n_bumps
    surfaces = []
    for m in range(preset.M):
        K = int(rng.integers(lo_k, hi_k + 1))
        if preset.center_ranges is not None:
            bounds = np.asarray(preset.center_ranges[m], dtype=float)
            centers = rng.uniform(bounds[:, 0], bounds[:, 1], size=(K, preset.U))
        else:
            centers = rng.uniform(0.0, 1.0, size=(K, preset.U))
        widths = rng.uniform(*preset.width_range, size=K)
        weights = rng.uniform(*preset.weight_range, size=K)
        surfaces.append(TaskSurface(centers, widths, weights, preset.baseline))
    seed_val = int(seed) if isinstance(seed, (int, np.integer)) else None
    return GroundTruthEnvironment(surfaces, preset.noise_std, preset, seed_val)


# -- optimum over the team's assignments -------------------------------------

@dataclass(frozen=True)
class OracleResult:
    value: float
    X: np.ndarray
    approximate: bool = False


@njit(cache=True)
def _maxplus_fold(F, G, dims, strides):
    # H[z] = max_{x <= z} F[x] + G[z - x] on a box lattice, flat C-order arrays.
    P = F.shape[0]
    S = dims.shape[0]
    H = np.full(P, -np.inf)
    x = np.zeros(S, dtype=np.int64)
    w = np.zeros(S, dtype=np.int64)
    for xi in range(P):
        rest = xi
        for s in range(S):
            x[s] = rest // strides[s]
            rest -= x[s] * strides[s]
        fx = F[xi]
        if fx == -np.inf:
            continue
        for s in range(S):
            w[s] = 0
        wi = 0
        while True:
            val = fx + G[wi]
            if val > H[xi + wi]:
                H[xi + wi] = val
            # odometer over w in the box [0, dims - 1 - x]
            s = S - 1
            while s >= 0:
                if w[s] < dims[s] - 1 - x[s]:
                    w[s] += 1
                    wi += strides[s]
                    break
                wi -= w[s] * strides[s]
                w[s] = 0
                s -= 1
            if s < 0:
                break
    return H


def _prefix_max(F: np.ndarray) -> np.ndarray:
    G = F.copy()
    for ax in range(G.ndim):
        G = np.maximum.accumulate(G, axis=ax)
    return G


def _lattice_points(counts) -> np.ndarray:
    dims = tuple(int(c) + 1 for c in counts)
    return np.indices(dims).reshape(len(dims), -1).T


def optimal_total_reward(env: GroundTruthEnvironment, team: Team,
                         budget: int = ORACLE_BUDGET) -> OracleResult:
    """Best noise-free total reward over every valid assignment of ``team``.

    Exact via max-plus dynamic programming over the per-species count lattice
    (tasks are folded one at a time).  Above ``budget`` elementary steps a
    local search result is returned with ``approximate=True``.
    """
    if team.n_traits != env.U:
        raise ValueError(f"team has {team.n_traits} traits, environment {env.U}")
    counts = team.counts
    M, S = env.M, team.n_species
    work = math.prod(math.comb(int(c) + 2, 2) for c in counts) * max(M - 1, 1)
    if work > budget:
        return _local_search_optimum(env, team)
    dims = np.array([int(c) + 1 for c in counts], dtype=np.int64)
    strides = np.array([math.prod(dims[s + 1:]) for s in range(S)], dtype=np.int64)
    pts = _lattice_points(counts)
    Ys = normalize(pts @ team.traits, team)
    F = [np.ascontiguousarray(f(Ys)) for f in env.surfaces]
    shape = tuple(dims)

    # G[m](z): best reward of tasks m..M-1 using at most z robots
    G = [None] * M
    G[M - 1] = _prefix_max(F[M - 1].reshape(shape)).ravel()
    for m in range(M - 2, -1, -1):
        G[m] = _maxplus_fold(F[m], G[m + 1], dims, strides)

    X = np.zeros((M, S), dtype=np.int64)
    z = counts.astype(np.int64).copy()
    for m in range(M):
        mask = np.all(pts <= z, axis=1)
        idx = np.flatnonzero(mask)
        if m < M - 1:
            rest = ((z - pts[idx]) * strides).sum(axis=1)
            vals = F[m][idx] + G[m + 1][rest]
        else:
            vals = F[m][idx]
        pick = idx[int(np.argmax(vals))]
        X[m] = pts[pick]
        z = z - pts[pick]
    value = float(np.sum(env.true_rewards(normalize(X @ team.traits, team))))
    return OracleResult(value, X, False)


def _local_search_optimum(env: GroundTruthEnvironment, team: Team,
                          restarts: int = 20, seed: int = 0) -> OracleResult:
    # Single-robot moves between tasks and the idle pool until no move helps.
    rng = np.random.default_rng(seed)
    M, S = env.M, team.n_species

    def total(X):
        return float(np.sum(env.true_rewards(normalize(X @ team.traits, team))))

    best_X, best_v = np.zeros((M, S), dtype=np.int64), -np.inf
    for _ in range(restarts):
        X = np.zeros((M, S), dtype=np.int64)
        for s in range(S):
            dest = rng.integers(0, M + 1, size=int(team.counts[s]))
            for m in range(M):
                X[m, s] = int(np.sum(dest == m))
        v = total(X)
        improved = True
        while improved:
            improved = False
            for s in range(S):
                for src in range(-1, M):
                    for dst in range(-1, M):
                        # X may change inside this loop, so check the move each time
                        if dst == src or (src >= 0 and X[src, s] == 0):
                            continue
                        if src < 0 and X[:, s].sum() >= team.counts[s]:
                            continue
                        Xn = X.copy()
                        if src >= 0:
                            Xn[src, s] -= 1
                        if dst >= 0:
                            Xn[dst, s] += 1
                        vn = total(Xn)
                        if vn > v + 1e-12:
                            X, v, improved = Xn, vn, True
        if v > best_v:
            best_X, best_v = X, v
    return OracleResult(best_v, best_X, True)
