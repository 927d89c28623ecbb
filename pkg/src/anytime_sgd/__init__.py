"""Fixed-time distributed SGD with work-proportional fusion.

Workers compute for a fixed window each epoch; the master fuses whatever
arrives, weighting each update by the work behind it.  The package bundles a
virtual-clock simulator with straggler models, classic-barrier and
drop-straggler baselines, closed-form convergence and concentration bounds
with Monte Carlo checks, and a small TCP runtime.
"""

from .bounds import (
    BoundInputs,
    expected_distance_bound,
    high_probability_bound,
    monte_carlo_validate,
    optimal_weights,
    variance_bound,
)
from .combine import CombineRule, EpochResult, combine_weights, fuse, generalized_blend
from .data import AssignmentTable, Dataset, Shard, build_assignment, generate_synthetic, worker_shard
from .latency import Distribution, LatencyModel, default_heavy_tail
from .problem import (
    DataSample,
    ProblemConstants,
    StepSchedule,
    estimate_constants,
    normalized_error,
)
from .simulate import RunTrace, SimulationPlan, compare_schemes, simulate_run
from .worker import WorkerBudget, WorkerReport, continue_idle_updates, run_worker_epoch

__version__ = "0.1.0"
