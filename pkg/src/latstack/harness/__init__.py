"""Experiment runner: jobs, sweeps, deterministic artifacts."""

from .jobs import JobConfig, NAMED_JOBS, named_job, run_job  # noqa: F401
from .sweep import SweepResult, sweep_grid  # noqa: F401
