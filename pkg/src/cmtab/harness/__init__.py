from cmtab.harness.config import ConfigError, ExperimentConfig, generate_random_team
from cmtab.harness.demos import (
    Demonstration,
    DemonstrationError,
    bootstrap,
    ingest_demonstrations,
    synthesize_demonstrations,
)
from cmtab.harness.experiment import RunLog, run_experiment, run_single, summarize_dir
from cmtab.harness.metrics import compute_bur, compute_cmr

__all__ = [
    "ConfigError", "Demonstration", "DemonstrationError", "ExperimentConfig", "RunLog",
    "bootstrap", "compute_bur", "compute_cmr", "generate_random_team",
    "ingest_demonstrations", "run_experiment", "run_single", "summarize_dir",
    "synthesize_demonstrations",
]
