"""Deterministic discrete-event loop driving scheduler, rebalancer, and GC.

Activations are processed one timestamp at a time, in a fixed subsystem
order (external events, deferred executions, scheduler, rebalancer, GC),
with lexicographic tie-breaks everywhere, so identical inputs always yield
byte-identical logs.
"""

from __future__ import annotations

import copy
import heapq
from dataclasses import dataclass, field
from typing import Optional

from . import cluster, lifecycle, rebalance, scheduler
from .cluster import (
    ClusterState,
    DeletionMode,
    NodeStatus,
    Phase,
    PriorityClass,
    Service,
    ServiceStatus,
)
from .errors import SimulationError
from .eventlog import Recorder
from .metrics import MetricsReport, metrics_summary

EVENT_KINDS = (
    "SubmitService",
    "CompleteService",
    "NodeDown",
    "NodeUp",
    "DeleteObject",
    "UpdatePriorityClass",
    "ManualRebalance",
    "ClearFinalizer",
    "Tick",
)

# Subsystem order at equal timestamps.
_RANK_EXTERNAL = 0
_RANK_EXEC = 1  # hold expiries and migration landings
_RANK_SCHEDULER = 2
_RANK_REBALANCER = 3
_RANK_GC = 4


@dataclass
class SimEvent:
    time: int
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("event time must be >= 0")
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass
class EngineConfig:
    scheduler_period_secs: int = 0  # 0 = run after every external event
    gc_sweep_period_secs: int = 60
    rebalance_period_secs: int = 60
    eviction_delay_secs: int = 1
    seed: int = 0
    validate_each_step: bool = False

    def __post_init__(self):
        if self.scheduler_period_secs < 0:
            raise ValueError("scheduler period must be >= 0")
        if self.gc_sweep_period_secs <= 0 or self.rebalance_period_secs <= 0:
            raise ValueError("periods must be > 0")
        if self.eviction_delay_secs < 0:
            raise ValueError("eviction delay must be >= 0")


@dataclass
class SimulationResult:
    state: ClusterState
    queue: scheduler.SchedulingQueue
    records: list[dict]
    report: MetricsReport


class Engine:
    def __init__(self, scenario, config: Optional[EngineConfig] = None):
        self.scenario = scenario
        self.config = config if config is not None else scenario.engine
        self.state = scenario.build_initial_state()
        self.queue = scheduler.SchedulingQueue()
        self.rec = Recorder(self.state)
        self._heap: list[tuple[int, int, int, str, object]] = []
        self._seq = 0
        self._manual_remaining = list(scenario.rebalance.manual_moves)
        self._horizon = 0
        for event in scenario.events:
            self._push(event.time, _RANK_EXTERNAL, "event", event)
            self._horizon = max(self._horizon, event.time)
        if self.config.scheduler_period_secs > 0:
            self._push_tick(_RANK_SCHEDULER, self.config.scheduler_period_secs)
        self._push_tick(_RANK_REBALANCER, self.config.rebalance_period_secs)
        self._push_tick(_RANK_GC, self.config.gc_sweep_period_secs)

    # -- activation plumbing -------------------------------------------------

    def _push(self, time: int, rank: int, kind: str, payload) -> None:
        heapq.heappush(self._heap, (time, rank, self._seq, kind, payload))
        self._seq += 1

    def _push_tick(self, rank: int, time: int) -> None:
        if time <= self._horizon:
            self._push(time, rank, "tick", None)

    @property
    def finished(self) -> bool:
        return not self._heap

    def next_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    # -- main loop ------------------------------------------------------------

    def run(self, until: Optional[int] = None) -> SimulationResult:
        while self._heap:
            if until is not None and self._heap[0][0] >= until:
                break
            self.step()
        if self.rec.records:
            utils = {
                nid: cluster.utilization(self.state, node)
                for nid, node in self.state.nodes.items()
                if node.status is NodeStatus.UP
            }
            try:
                final_imbalance = rebalance.imbalance_score(self.state)
            except SimulationError:
                final_imbalance = None
            self.rec.run_ended(self.state.clock, final_imbalance, utils)
        report = metrics_summary(self.rec.records)
        return SimulationResult(self.state, self.queue, self.rec.records, report)

    def step(self) -> None:
        """Process every activation due at the next timestamp."""
        if not self._heap:
            raise SimulationError("engine finished")
        now = self._heap[0][0]
        due = []
        while self._heap and self._heap[0][0] == now:
            due.append(heapq.heappop(self._heap))
        due.sort(key=lambda item: (item[1], item[2]))
        self.state.clock = now

        ran_external = False
        want_scheduler = False
        force_rebalance = False
        force_gc = False
        scheduler_due = False
        rebalance_due = False
        gc_due = False
        forced_moves: Optional[list[tuple[str, str]]] = None

        for _time, rank, _seq, kind, payload in due:
            if kind == "event":
                flags = self._apply_event(payload)
                ran_external = True
                if flags.get("tick"):
                    want_scheduler = force_rebalance = force_gc = True
                if flags.get("rebalance"):
                    force_rebalance = True
                    if flags.get("moves") is not None:
                        forced_moves = flags["moves"]
            elif kind == "hold-expiry":
                node_id, service_id = payload
                node = self.state.nodes.get(node_id)
                if node is not None and service_id in node.draining:
                    del node.draining[service_id]
                    self.rec.hold_released(now, node_id, service_id)
                want_scheduler = True
            elif kind == "migration-land":
                landed = rebalance.land_migration(
                    self.state, self.queue, self.rec, payload, now
                )
                if not landed:
                    want_scheduler = True
            elif kind == "tick":
                if rank == _RANK_SCHEDULER:
                    scheduler_due = True
                    self._push_tick(_RANK_SCHEDULER, now + self.config.scheduler_period_secs)
                elif rank == _RANK_REBALANCER:
                    rebalance_due = True
                    self._push_tick(_RANK_REBALANCER, now + self.config.rebalance_period_secs)
                elif rank == _RANK_GC:
                    gc_due = True
                    self._push_tick(_RANK_GC, now + self.config.gc_sweep_period_secs)

        event_driven = self.config.scheduler_period_secs == 0
        if scheduler_due or want_scheduler or (event_driven and ran_external):
            self._run_scheduler(now)
        if rebalance_due or force_rebalance:
            self._run_rebalance(now, forced_moves)
        if gc_due or force_gc:
            lifecycle.gc_sweep(
                self.state, self.scenario.ttl, self.rec, now, policy=self.scenario.gc_policy
            )
        if self.config.validate_each_step:
            violations = cluster.validate_state(self.state)
            if violations:
                raise SimulationError(f"state invariant broken at t={now}: {violations}")

    # -- subsystems --------------------------------------------------------------

    def _run_scheduler(self, now: int) -> None:
        result = scheduler.schedule_cycle(
            self.state,
            self.queue,
            self.rec,
            now,
            eviction_delay=self.config.eviction_delay_secs,
        )
        for node_id, service_id, until in result.holds:
            self._push(until, _RANK_EXEC, "hold-expiry", (node_id, service_id))

    def _run_rebalance(self, now: int, forced_moves) -> None:
        config = self.scenario.rebalance
        if not rebalance.in_maintenance_window(now, config.windows):
            if forced_moves is not None:
                self.rec.rebalance_skipped(now, "outside-window")
            return
        up = [n for n in self.state.nodes.values() if n.status is NodeStatus.UP]
        if not up:
            return
        manual = forced_moves
        if manual is None and config.strategy == "Manual":
            manual = self._manual_remaining
        plan = rebalance.plan_rebalance(self.state, config, manual_moves=manual)
        if manual is self._manual_remaining and plan.moves:
            del self._manual_remaining[: len(plan.moves)]
        for move in plan.moves:
            rebalance.begin_migration(self.state, self.queue, self.rec, move, now)
            if self.config.eviction_delay_secs == 0:
                rebalance.land_migration(self.state, self.queue, self.rec, move, now)
            else:
                self._push(
                    now + self.config.eviction_delay_secs, _RANK_EXEC, "migration-land", move
                )

    # -- external events --------------------------------------------------------

    def _apply_event(self, event: SimEvent) -> dict:
        now = event.time
        handler = {
            "SubmitService": self._on_submit,
            "CompleteService": self._on_complete,
            "NodeDown": self._on_node_down,
            "NodeUp": self._on_node_up,
            "DeleteObject": self._on_delete,
            "UpdatePriorityClass": self._on_update_class,
            "ManualRebalance": self._on_manual_rebalance,
            "ClearFinalizer": self._on_clear_finalizer,
            "Tick": lambda e, t: {"tick": True},
        }[event.kind]
        return handler(event, now) or {}

    def _on_submit(self, event: SimEvent, now: int) -> dict:
        service_id = event.payload["service"]
        if service_id in self.state.services:
            raise SimulationError(f"duplicate submission: {service_id}")
        if service_id in self.state.tombstones:
            raise SimulationError(f"id was deleted, cannot reuse: {service_id}")
        spec = copy.deepcopy(self.scenario.service_specs[service_id])
        for ref in spec.owner_refs:
            if ref == service_id:
                raise SimulationError(f"service {service_id} owns itself")
            if ref not in self.state.services:
                raise SimulationError(f"owner {ref} of {service_id} does not exist")
        priority = scheduler.resolve_priority(spec, self.state.priority_classes)
        self.state.services[service_id] = Service(spec, ServiceStatus(enqueue_time=now))
        self.rec.service_submitted(now, spec, priority)
        self.queue.enqueue(service_id, priority)
        return {}

    def _on_complete(self, event: SimEvent, now: int) -> dict:
        service_id = event.payload["service"]
        outcome = event.payload.get("outcome", "Completed")
        svc = self.state.services.get(service_id)
        if svc is None or svc.status.phase is not Phase.RUNNING:
            self.rec.event_ignored(now, event.kind, f"{service_id} not running")
            return {}
        scheduler.release_image(self.state, self.rec, service_id, now)
        node_id = cluster.release_service(self.state, service_id)
        svc.status.phase = Phase(outcome)
        svc.status.finish_time = now
        self.rec.service_completed(now, service_id, outcome, node_id)
        return {}

    def _on_node_down(self, event: SimEvent, now: int) -> dict:
        node = self.state.nodes.get(event.payload["node"])
        if node is None or node.status is NodeStatus.DOWN:
            self.rec.event_ignored(now, event.kind, "node missing or already down")
            return {}
        node.status = NodeStatus.DOWN
        self.rec.node_down(now, node.id)
        for service_id in sorted(node.draining):
            del node.draining[service_id]
            self.rec.hold_released(now, node.id, service_id)
        for service_id in sorted(node.placed):
            scheduler.evict_service(
                self.state, self.queue, self.rec, service_id, "node-down", now
            )
        return {}

    def _on_node_up(self, event: SimEvent, now: int) -> dict:
        node = self.state.nodes.get(event.payload["node"])
        if node is None or node.status is NodeStatus.UP:
            self.rec.event_ignored(now, event.kind, "node missing or already up")
            return {}
        node.status = NodeStatus.UP
        self.rec.node_up(now, node.id)
        return {}

    def _on_delete(self, event: SimEvent, now: int) -> dict:
        object_id = event.payload["object"]
        mode = DeletionMode(event.payload.get("mode", "Background"))
        if object_id not in self.state.services and object_id not in self.state.images:
            self.rec.event_ignored(now, event.kind, f"{object_id} unknown or already deleted")
            return {}
        lifecycle.delete_object(
            self.state, lifecycle.DeletionRequest(object_id, mode), self.rec, now
        )
        self.queue.remove(object_id)
        return {}

    def _on_update_class(self, event: SimEvent, now: int) -> dict:
        payload = event.payload
        name = payload["name"]
        existing = self.state.priority_classes.get(name)
        value = payload.get("value", existing.value if existing else None)
        if value is None:
            raise SimulationError(f"priority class {name} needs a value")
        global_default = payload.get(
            "globalDefault", existing.global_default if existing else False
        )
        description = payload.get("description", existing.description if existing else "")
        if global_default:
            for other in self.state.priority_classes.values():
                if other.name != name and other.global_default:
                    other.global_default = False
                    self.rec.priority_class_updated(now, other)
        updated = PriorityClass(name, value, global_default, description)
        self.state.priority_classes[name] = updated
        self.rec.priority_class_updated(now, updated)
        self.queue.reprioritize(
            lambda sid: scheduler.resolve_priority(
                self.state.services[sid].spec, self.state.priority_classes
            )
        )
        return {}

    def _on_manual_rebalance(self, event: SimEvent, now: int) -> dict:
        moves = event.payload.get("moves")
        parsed = None
        if moves is not None:
            parsed = [(m["service"], m["target"]) for m in moves]
        return {"rebalance": True, "moves": parsed}

    def _on_clear_finalizer(self, event: SimEvent, now: int) -> dict:
        object_id = event.payload["object"]
        finalizer = event.payload["finalizer"]
        svc = self.state.services.get(object_id)
        if svc is None or svc.status.phase is not Phase.DELETING or finalizer not in svc.spec.finalizers:
            self.rec.event_ignored(now, event.kind, f"{object_id} has no clearable {finalizer}")
            return {}
        lifecycle.clear_finalizer(self.state, object_id, finalizer, self.rec, now)
        return {}


def run(scenario, config: Optional[EngineConfig] = None, until: Optional[int] = None) -> SimulationResult:
    """Run a scenario to completion (or to ``until``, half-open)."""
    return Engine(scenario, config).run(until=until)
