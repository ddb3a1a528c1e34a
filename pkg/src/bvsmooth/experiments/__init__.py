from .config import DEFAULTS, ExperimentConfig, RunRecord
from .linear import run_linear_experiment
from .nonlinear import run_nonlinear_experiment
from .verify import run_bound_verify
