"""Experiment harness: specs, seeded runners, lower-bound checks, plots and the CLI."""
from .config import ExperimentSpec, format_config, load_config, parse_config, profile
from .experiments import AggregateResult, BanditResult, run_bandit, run_recover
from .lbcheck import lbcheck
from .plot import emit_plot
from .seeds import derive_seed

__all__ = [
    "ExperimentSpec", "parse_config", "load_config", "format_config", "profile", "AggregateResult",
    "BanditResult", "run_recover", "run_bandit", "lbcheck", "emit_plot", "derive_seed",
]
