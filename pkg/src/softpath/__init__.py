"""Step paths on N u {inf}, last-visit projections, the soft metric and metastability experiments."""

from ._backend import BACKEND
from .errors import SoftPathError
from .metrics import MetricResult, skorohod_dist, skorohod_dist_oracle, soft_dist, state_dist
from .operators import (
    PathTower,
    TimeChange,
    apply_time_change,
    project_infinity,
    project_last_visit,
    reconstruct_from_tower,
    record_last_visit_in,
    trace_on,
)
from .paths import INF, StepPath, eval_at, make_step_path

__version__ = "0.1.0"
