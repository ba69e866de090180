"""Configuration, orchestration and CSV/SVG output."""

from .config import EXPERIMENTS, ExperimentConfig, build_config, load_config
from .experiments import execute, run_experiment
from .io import AggregateSeries, aggregate_seeds, emit_csv, emit_svg_plot, read_columns, read_csv

__all__ = [
    "EXPERIMENTS",
    "AggregateSeries",
    "ExperimentConfig",
    "aggregate_seeds",
    "build_config",
    "emit_csv",
    "emit_svg_plot",
    "execute",
    "load_config",
    "read_columns",
    "read_csv",
    "run_experiment",
]
