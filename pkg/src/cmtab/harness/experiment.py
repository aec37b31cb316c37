"""Run strategies x teams x rounds and persist per-iteration logs.

Each run writes ``<team>_<strategy>_round<r>.csv`` (one row per iteration)
and a matching ``.json`` manifest.  ``summary.json`` / ``summary.csv`` hold
per-strategy means and ``curves.csv`` the mean BUR/CMR curves.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cmtab.baselines import StrategyKind, make_strategy
from cmtab.environment import GroundTruthEnvironment, OracleResult, generate_environment, optimal_total_reward
from cmtab.harness.config import (
    SEED_ENV,
    SEED_NOISE,
    SEED_STRATEGY,
    ExperimentConfig,
    derive_seed,
    rng_for,
)
from cmtab.harness.demos import bootstrap, ingest_demonstrations
from cmtab.harness.metrics import compute_bur, compute_cmr
from cmtab.problem import Team, achieved_traits, is_feasible_target, is_valid_assignment
from cmtab.solver import solve_allocation

log = logging.getLogger(__name__)

CSV_COLUMNS = ["iteration", "true_total", "noisy_total", "bur", "bur_normalized", "cmr",
               "phase", "residual", "target", "assignment", "achieved", "rewards"]


@dataclass
class RunLog:
    strategy: str
    team_rank: int  # 1 = least competent team
    team_index: int  # position in the config
    round: int
    team: Team
    r_star: float
    r_star_approximate: bool = False
    targets: list = field(default_factory=list)
    assignments: list = field(default_factory=list)
    achieved: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    noisy_totals: list = field(default_factory=list)
    true_totals: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    error: str | None = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def name(self) -> str:
        return f"team{self.team_rank}_{self.strategy}_round{self.round}"

    @property
    def bur(self) -> np.ndarray:
        return compute_bur(self.true_totals)

    @property
    def bur_normalized(self) -> np.ndarray:
        return compute_bur(self.true_totals, self.r_star)[1]

    @property
    def cmr(self) -> np.ndarray:
        return compute_cmr(self.true_totals, self.r_star)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        if not self.true_totals:
            return buf.getvalue()
        bur, burn, cmr = self.bur, self.bur_normalized, self.cmr
        for i in range(len(self.true_totals)):
            w.writerow([
                i + 1, repr(self.true_totals[i]), repr(self.noisy_totals[i]),
                repr(float(bur[i])), repr(float(burn[i])), repr(float(cmr[i])),
                self.phases[i], repr(self.residuals[i]),
                json.dumps(np.asarray(self.targets[i]).tolist()),
                json.dumps(np.asarray(self.assignments[i]).tolist()),
                json.dumps(np.asarray(self.achieved[i]).tolist()),
                json.dumps(np.asarray(self.rewards[i]).tolist()),
            ])
        return buf.getvalue()

    def manifest(self) -> dict:
        final = {}
        if self.true_totals:
            final = {"bur": float(self.bur[-1]), "bur_normalized": float(self.bur_normalized[-1]),
                     "cmr": float(self.cmr[-1]), "iterations": len(self.true_totals)}
        return {"strategy": self.strategy, "team_rank": self.team_rank,
                "team_index": self.team_index, "round": self.round,
                "team": self.team.to_dict(), "r_star": self.r_star,
                "r_star_approximate": self.r_star_approximate,
                "final": final, "error": self.error}


@dataclass
class ExperimentResult:
    runs: list[RunLog]
    summary: dict
    environment: GroundTruthEnvironment
    teams: list[Team]
    oracles: list[OracleResult]


def run_single(env: GroundTruthEnvironment, team: Team, strategy, cfg: ExperimentConfig,
               r_star: float, *, team_index: int = 0, team_rank: int = 1, round_: int = 0,
               models=None, r_star_approximate: bool = False) -> RunLog:
    """One (team, strategy, round) run of ``cfg.iterations`` iterations.

    The strategy only ever sees noisy per-task rewards; true totals go to
    the log for the metrics.
    """
    kind = StrategyKind.parse(strategy) if isinstance(strategy, str) else strategy
    noise_rng = rng_for(cfg.seed, SEED_NOISE, team_index, round_)
    strat_rng = rng_for(cfg.seed, SEED_STRATEGY, team_index, round_)
    models = [m.copy() for m in models] if models is not None else None
    strat = make_strategy(kind, team, env.M, cfg.effective_horizon, cfg.cmtab, cfg.kernel,
                          strat_rng, models=models)
    run = RunLog(kind.value, team_rank, team_index, round_, team, r_star, r_star_approximate)
    t0 = time.perf_counter()
    for i in range(1, cfg.iterations + 1):
        target = strat.propose(i)
        res = solve_allocation(target, team, cfg.cmtab.node_budget)
        achieved = achieved_traits(res.X, team)
        noisy, noisy_total, true_total = env.evaluate(achieved, noise_rng)
        strat.feedback(achieved, noisy)
        run.targets.append(target)
        run.assignments.append(res.X)
        run.achieved.append(achieved)
        run.rewards.append(noisy)
        run.noisy_totals.append(noisy_total)
        run.true_totals.append(true_total)
        run.phases.append(res.phase)
        run.residuals.append(res.residual)
    run.seconds = time.perf_counter() - t0
    return run


def _run_job(args) -> RunLog:
    env, team, kind, cfg, r_star, approx, t_idx, rank, rnd, models = args
    try:
        return run_single(env, team, kind, cfg, r_star, team_index=t_idx, team_rank=rank,
                          round_=rnd, models=models, r_star_approximate=approx)
    except Exception as exc:  # one broken run must not sink the sweep
        log.exception("run team%d %s round%d aborted", rank, kind, rnd)
        return RunLog(kind, rank, t_idx, rnd, team, r_star, approx,
                      error=f"{type(exc).__name__}: {exc}")


def summarize_runs(runs: list[RunLog]) -> dict:
    """Per-strategy mean final normalized BUR and final CMR, plus mean curves."""
    out = {"strategies": {}, "teams": {}}
    good = [r for r in runs if r.ok and r.true_totals]
    for kind in dict.fromkeys(r.strategy for r in runs):
        mine = [r for r in good if r.strategy == kind]
        failed = sum(1 for r in runs if r.strategy == kind and not r.ok)
        if not mine:
            out["strategies"][kind] = {"runs": 0, "failed": failed}
            continue
        burn = np.array([r.bur_normalized[-1] for r in mine])
        cmr = np.array([r.cmr[-1] for r in mine])
        out["strategies"][kind] = {
            "runs": len(mine), "failed": failed,
            "mean_final_bur_normalized": float(burn.mean()),
            "mean_final_cmr": float(cmr.mean()),
            "any_r_star_approximate": any(r.r_star_approximate for r in mine),
        }
    for rank in sorted({r.team_rank for r in good}):
        row = {}
        for kind in out["strategies"]:
            mine = [r for r in good if r.team_rank == rank and r.strategy == kind]
            if mine:
                row[kind] = {"bur_normalized": float(np.mean([r.bur_normalized[-1] for r in mine])),
                             "cmr": float(np.mean([r.cmr[-1] for r in mine]))}
        rs = next(r.r_star for r in good if r.team_rank == rank)
        out["teams"][str(rank)] = {"r_star": rs, "strategies": row}
    return out


def mean_curves(runs: list[RunLog]) -> dict[str, dict[str, np.ndarray]]:
    curves = {}
    for kind in dict.fromkeys(r.strategy for r in runs):
        mine = [r for r in runs if r.ok and r.strategy == kind and r.true_totals]
        if not mine:
            continue
        n = min(len(r.true_totals) for r in mine)
        curves[kind] = {
            "bur_normalized": np.mean([r.bur_normalized[:n] for r in mine], axis=0),
            "cmr": np.mean([r.cmr[:n] for r in mine], axis=0),
        }
    return curves


def write_run(run: RunLog, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{run.name}.csv").write_text(run.csv_text())
    manifest = run.manifest() | {"written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    (out / f"{run.name}.json").write_text(json.dumps(manifest, indent=1))


def write_summary(summary: dict, curves, out: Path) -> None:
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "runs", "failed", "mean_final_bur_normalized", "mean_final_cmr"])
        for kind, s in summary["strategies"].items():
            w.writerow([kind, s["runs"], s["failed"], repr(s.get("mean_final_bur_normalized")),
                        repr(s.get("mean_final_cmr"))])
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "iteration", "bur_normalized_mean", "cmr_mean"])
        for kind, c in curves.items():
            for i, (b, r) in enumerate(zip(c["bur_normalized"], c["cmr"]), start=1):
                w.writerow([kind, i, repr(float(b)), repr(float(r))])


def prepare(cfg: ExperimentConfig):
    """Environment, teams (sorted by optimum) and oracle results for a config."""
    env = generate_environment(cfg.preset, derive_seed(cfg.seed, SEED_ENV))
    env.seed = int(cfg.seed)
    teams = cfg.build_teams()
    oracles = [optimal_total_reward(env, t) for t in teams]
    # rank 1 = lowest optimum, following the usual competence ordering
    order = sorted(range(len(teams)), key=lambda k: (oracles[k].value, k))
    ranks = {k: r + 1 for r, k in enumerate(order)}
    return env, teams, oracles, ranks


def run_experiment(cfg: ExperimentConfig, output_dir=None, write: bool = True) -> ExperimentResult:
    env, teams, oracles, ranks = prepare(cfg)
    models = None
    demo_path = cfg.resolve(cfg.demonstrations)
    if demo_path is not None:
        demos = ingest_demonstrations(demo_path, env.M)
        models = bootstrap(demos, env.M, env.U, cfg.kernel)

    jobs = [(env, team, kind, cfg, oracles[k].value, oracles[k].approximate, k, ranks[k], rnd,
             models)
            for k, team in enumerate(teams)
            for kind in cfg.strategies
            for rnd in range(cfg.rounds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_run_job, jobs))
    else:
        runs = [_run_job(j) for j in jobs]
    runs.sort(key=lambda r: (r.team_rank, cfg.strategies.index(r.strategy), r.round))

    summary = summarize_runs(runs)
    summary["config"] = cfg.to_dict()
    summary["environment"] = env.to_dict()
    if write:
        out = Path(output_dir) if output_dir is not None else cfg.resolve(cfg.output_dir)
        if out is None:
            out = cfg.base_dir / "runs" / cfg.name
        for run in runs:
            write_run(run, out)
        write_summary(summary, mean_curves(runs), out)
        summary["output_dir"] = str(out)
    return ExperimentResult(runs, summary, env, teams, oracles)


def load_runs(log_dir) -> list[dict]:
    """Read back every run (manifest plus the CSV's numeric columns)."""
    log_dir = Path(log_dir)
    runs = []
    for mpath in sorted(log_dir.glob("team*_*_round*.json")):
        man = json.loads(mpath.read_text())
        cpath = mpath.with_suffix(".csv")
        rows = list(csv.DictReader(cpath.open())) if cpath.exists() else []
        man["true_totals"] = [float(r["true_total"]) for r in rows]
        man["bur_normalized"] = [float(r["bur_normalized"]) for r in rows]
        man["cmr"] = [float(r["cmr"]) for r in rows]
        runs.append(man)
    return runs


def summarize_dir(log_dir) -> dict:
    """Recompute per-strategy means from the raw per-run CSVs."""
    runs = load_runs(log_dir)
    if not runs:
        raise FileNotFoundError(f"no run logs under {log_dir}")
    out = {}
    for kind in dict.fromkeys(r["strategy"] for r in runs):
        mine = [r for r in runs if r["strategy"] == kind and r["true_totals"] and not r["error"]]
        out[kind] = {
            "runs": len(mine),
            "mean_final_bur_normalized": float(np.mean([r["bur_normalized"][-1] for r in mine]))
            if mine else None,
            "mean_final_cmr": float(np.mean([r["cmr"][-1] for r in mine])) if mine else None,
        }
    return out
