"""Monte Carlo experiment orchestration."""

from .config import ConfigError, Coordinate, ExperimentConfig, load_config
from .engine import SweepRecord, run_sweep, run_trial
from .estimator import EstimatorRecord, run_estimator
from .output import emit_csv, emit_gnuplot, read_csv
from .presets import preset, preset_names
