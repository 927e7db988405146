"""Node-imbalance detection and incremental service migration.

Imbalance is the spread (max minus min) of node utilization over Up nodes.
Plans move services from the most-utilized node to the least-utilized one,
a bounded number per step, only inside declared maintenance windows, and
never touch services labeled ``no-reschedule``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from . import cluster, scheduler
from .cluster import ClusterState, NodeStatus, Phase, NO_RESCHEDULE_LABEL
from .errors import SimulationError
from .eventlog import Recorder
from .resources import ResourceVector, sum_vectors


class Move(NamedTuple):
    service_id: str
    source: str
    target: str


@dataclass
class RebalanceConfig:
    threshold: float = 0.25
    max_migrations_per_step: int = 1
    strategy: str = "Automatic"  # "Automatic" | "Manual"
    manual_moves: list[tuple[str, str]] = field(default_factory=list)  # (service, target)
    windows: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")
        if self.max_migrations_per_step < 1:
            raise ValueError("max_migrations_per_step must be >= 1")
        previous_end = None
        for start, end in sorted(self.windows):
            if start >= end:
                raise ValueError(f"window [{start}, {end}) is empty")
            if previous_end is not None and start < previous_end:
                raise ValueError("maintenance windows overlap")
            previous_end = end


@dataclass
class MigrationPlan:
    moves: list[Move]
    predicted_spread_after: float


def in_maintenance_window(now: int, windows: list[tuple[int, int]]) -> bool:
    """True iff ``now`` falls inside some half-open [start, end) window."""
    return any(start <= now < end for start, end in windows)


def imbalance_score(state: ClusterState) -> float:
    """Spread of utilization across Up nodes; 0 for a single node."""
    utils = [
        cluster.utilization(state, node)
        for node in state.nodes.values()
        if node.status is NodeStatus.UP
    ]
    if not utils:
        raise SimulationError("no Up nodes")
    return max(utils) - min(utils)


class _PlacementView:
    """Lightweight simulation of placements used while building a plan."""

    def __init__(self, state: ClusterState):
        self.capacity = {}
        self.allocated = {}
        self.placed = {}
        self.held = {}
        for nid, node in state.nodes.items():
            if node.status is not NodeStatus.UP:
                continue
            self.capacity[nid] = node.capacity
            self.allocated[nid] = state.allocated(node)
            self.placed[nid] = set(node.placed)
            self.held[nid] = sum_vectors(h.request for h in node.draining.values())

    def util(self, nid: str) -> float:
        return self.allocated[nid].dominant_share(self.capacity[nid])

    def spread(self) -> float:
        utils = [self.util(nid) for nid in self.capacity]
        return max(utils) - min(utils) if utils else 0.0

    def fits(self, nid: str, request: ResourceVector) -> bool:
        free = self.capacity[nid] - self.allocated[nid] - self.held[nid]
        return free.covers(request)

    def apply(self, move: Move, request: ResourceVector) -> None:
        self.allocated[move.source] = self.allocated[move.source] - request
        self.allocated[move.target] = self.allocated[move.target] + request
        self.placed[move.source].discard(move.service_id)
        self.placed[move.target].add(move.service_id)

    def spread_after(self, move: Move, request: ResourceVector) -> float:
        self.apply(move, request)
        value = self.spread()
        # Undo.
        self.apply(Move(move.service_id, move.target, move.source), request)
        return value


def _max_node(view: _PlacementView) -> str:
    return min(view.capacity, key=lambda nid: (-view.util(nid), nid))


def _min_node(view: _PlacementView) -> str:
    return min(view.capacity, key=lambda nid: (view.util(nid), nid))


def _validate_manual_move(state: ClusterState, service_id: str, target_id: str) -> Move:
    svc = state.services.get(service_id)
    if svc is None or svc.status.phase is not Phase.RUNNING:
        raise SimulationError(f"invalid move {service_id}->{target_id}: not running")
    if NO_RESCHEDULE_LABEL in svc.spec.labels:
        raise SimulationError(
            f"invalid move {service_id}->{target_id}: labeled {NO_RESCHEDULE_LABEL}"
        )
    target = state.nodes.get(target_id)
    if target is None or target.status is not NodeStatus.UP:
        raise SimulationError(f"invalid move {service_id}->{target_id}: target unavailable")
    if not cluster.match_constraints(target.labels, svc.spec.constraints):
        raise SimulationError(f"invalid move {service_id}->{target_id}: constraints mismatch")
    if not cluster.resource_fit(state, target, svc.spec.request):
        raise SimulationError(f"invalid move {service_id}->{target_id}: does not fit")
    return Move(service_id, svc.status.node_id, target_id)


def plan_rebalance(
    state: ClusterState,
    config: RebalanceConfig,
    manual_moves: Optional[list[tuple[str, str]]] = None,
) -> MigrationPlan:
    """Build a migration plan for the current imbalance.

    Manual mode validates and passes through operator moves (truncated to
    the per-step bound). Automatic mode repeatedly moves one service from
    the most-utilized node to the least-utilized one, choosing the move
    that minimizes the resulting spread (ties on service id) among those
    that fit, match constraints, are not pinned, and strictly improve the
    spread. Returns an empty plan when nothing qualifies.
    """
    view = _PlacementView(state)
    if not view.capacity:
        return MigrationPlan([], 0.0)
    if view.spread() <= config.threshold:
        return MigrationPlan([], view.spread())

    if manual_moves is None and config.strategy == "Manual":
        manual_moves = config.manual_moves
    if manual_moves is not None:
        moves = []
        for service_id, target_id in manual_moves[: config.max_migrations_per_step]:
            move = _validate_manual_move(state, service_id, target_id)
            moves.append(move)
            view.apply(move, state.services[service_id].spec.request)
        return MigrationPlan(moves, view.spread())

    moves: list[Move] = []
    moved: set[str] = set()
    for _ in range(config.max_migrations_per_step):
        current = view.spread()
        source = _max_node(view)
        target = _min_node(view)
        if source == target:
            break
        best: Optional[tuple[float, str]] = None
        for sid in sorted(view.placed[source]):
            # A service already moved this step is still restarting; it
            # cannot be moved again until it lands.
            if sid in moved:
                continue
            svc = state.services[sid]
            if NO_RESCHEDULE_LABEL in svc.spec.labels:
                continue
            if not cluster.match_constraints(
                state.nodes[target].labels, svc.spec.constraints
            ):
                continue
            if not view.fits(target, svc.spec.request):
                continue
            after = view.spread_after(Move(sid, source, target), svc.spec.request)
            if after >= current:
                continue
            key = (after, sid)
            if best is None or key < best:
                best = key
        if best is None:
            break
        move = Move(best[1], source, target)
        view.apply(move, state.services[move.service_id].spec.request)
        moves.append(move)
        moved.add(move.service_id)
    return MigrationPlan(moves, view.spread())


def begin_migration(
    state: ClusterState,
    queue: scheduler.SchedulingQueue,
    rec: Recorder,
    move: Move,
    now: int,
) -> None:
    """Evict the service from its source; placement happens separately
    after the restart delay."""
    svc = state.services.get(move.service_id)
    if svc is None or svc.status.phase is not Phase.RUNNING:
        raise SimulationError(f"not running: {move.service_id}")
    rec.migration(now, move.service_id, move.source, move.target)
    scheduler.evict_service(state, queue, rec, move.service_id, "migration", now, requeue=False)


def land_migration(
    state: ClusterState,
    queue: scheduler.SchedulingQueue,
    rec: Recorder,
    move: Move,
    now: int,
) -> bool:
    """Place a migrating service on its target, re-validating at execution
    time. Falls back to the scheduler queue when the target no longer fits.
    Returns True when the placement landed."""
    svc = state.services.get(move.service_id)
    if svc is None or svc.status.phase is not Phase.PENDING:
        return False  # deleted or otherwise handled while in flight
    target = state.nodes.get(move.target)
    landable = (
        target is not None
        and target.status is NodeStatus.UP
        and cluster.match_constraints(target.labels, svc.spec.constraints)
        and cluster.resource_fit(state, target, svc.spec.request)
    )
    if landable:
        scheduler.place_and_record(state, rec, move.service_id, move.target, now, cause="migration")
        return True
    rec.migration_fallback(now, move.service_id, move.target)
    priority = scheduler.resolve_priority(svc.spec, state.priority_classes)
    svc.status.enqueue_time = now
    queue.enqueue(move.service_id, priority)
    rec.service_requeued(now, move.service_id, priority)
    return False


def execute_migration(
    state: ClusterState,
    queue: scheduler.SchedulingQueue,
    rec: Recorder,
    move: Move,
    now: int,
) -> ClusterState:
    """Evict and immediately re-place a service (zero restart delay)."""
    begin_migration(state, queue, rec, move, now)
    land_migration(state, queue, rec, move, now)
    return state
