"""Sequential synthetic data generation for RCT tables with missing data."""

__version__ = "0.1.0"

from .frameworks import GenerationConfig, GenerationOutput, generate  # noqa: F401
from .harness import ExperimentConfig, emit, run_experiment  # noqa: F401
from .metrics import MetricReport, compute_report, trial_or  # noqa: F401
from .missingness import ImposedTable, ScenarioSpec, calibrate_intercept, impose  # noqa: F401
from .scenarios import REGISTRY, get_scenario  # noqa: F401
from .table import DataTable, load_csv, write_csv  # noqa: F401
