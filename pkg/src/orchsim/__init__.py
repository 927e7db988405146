"""orchsim: a deterministic container-orchestration simulator.

Implements priority-based preemptive scheduling, utilization-spread
rebalancing inside maintenance windows, and lifecycle garbage collection
(cascading deletion, finalizers, TTLs, image pruning) on top of a
discrete-event engine driven by declarative scenario files.
"""

from .cluster import (
    ClusterState,
    ImageRecord,
    Node,
    PriorityClass,
    Service,
    ServiceSpec,
    ServiceStatus,
    match_constraints,
    resource_fit,
    utilization,
    validate_state,
)
from .engine import Engine, EngineConfig, SimEvent, SimulationResult, run
from .errors import OrchsimError, ScenarioError, SimulationError
from .eventlog import parse_log_text, replay, serialize_records
from .lifecycle import DeletionRequest, GcPolicyRule, TtlConfig, gc_sweep, prune_images
from .metrics import MetricsReport, metrics_summary
from .rebalance import (
    MigrationPlan,
    RebalanceConfig,
    imbalance_score,
    in_maintenance_window,
    plan_rebalance,
)
from .resources import ResourceVector
from .scenario import Scenario, load_scenario, parse_scenario, serialize_scenario
from .scheduler import (
    PreemptionPlan,
    SchedulingQueue,
    find_feasible_node,
    plan_preemption,
    resolve_priority,
    schedule_cycle,
)

__version__ = "0.1.0"
