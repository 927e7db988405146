"""Structured event log: record construction, serialization, and replay.

Every state mutation the engine performs is written as one line-delimited
JSON record with a fixed field order, so identical runs produce identical
bytes and a final state can be rebuilt from the initial state plus the log.
"""

from __future__ import annotations

import json
from typing import Iterable, Optional

from . import cluster
from .cluster import (
    ClusterState,
    DeletionMode,
    EvictionPolicy,
    NodeStatus,
    ObjectKind,
    Phase,
    PriorityClass,
    Service,
    ServiceSpec,
    ServiceStatus,
    Hold,
)
from .errors import SimulationError
from .resources import ResourceVector

NODE_UP = "node-up"
NODE_DOWN = "node-down"
SERVICE_SUBMITTED = "service-submitted"
SERVICE_PLACED = "service-placed"
SERVICE_EVICTED = "service-evicted"
SERVICE_REQUEUED = "service-requeued"
SERVICE_COMPLETED = "service-completed"
SERVICE_TERMINATED = "service-terminated"
SERVICE_DELETING = "service-deleting"
SERVICE_DELETED = "service-deleted"
FINALIZER_CLEARED = "finalizer-cleared"
PROGRESS_DELEGATED = "progress-delegated"
HOLD_PLACED = "hold-placed"
HOLD_RELEASED = "hold-released"
MIGRATION = "migration"
MIGRATION_FALLBACK = "migration-fallback"
REBALANCE_SKIPPED = "rebalance-skipped"
IMAGE_USED = "image-used"
IMAGE_RELEASED = "image-released"
IMAGE_PRUNED = "image-pruned"
PRIORITY_CLASS_UPDATED = "priority-class-updated"
EVENT_IGNORED = "event-ignored"
RUN_ENDED = "run-ended"


def spec_to_payload(spec: ServiceSpec) -> dict:
    return {
        "request": spec.request.to_payload(),
        "priorityClassName": spec.priority_class_name,
        "constraints": dict(sorted(spec.constraints.items())),
        "labels": dict(sorted(spec.labels.items())),
        "ownerRefs": list(spec.owner_refs),
        "finalizers": list(spec.finalizers),
        "ttlAfterFinishedSecs": spec.ttl_after_finished_secs,
        "evictionPolicy": spec.eviction_policy.value,
        "objectKind": spec.kind.value,
        "image": spec.image,
        "delegateTo": spec.delegate_to,
    }


def spec_from_payload(service_id: str, payload: dict) -> ServiceSpec:
    return ServiceSpec(
        id=service_id,
        request=ResourceVector.from_payload(payload["request"]),
        priority_class_name=payload.get("priorityClassName"),
        constraints=dict(payload.get("constraints", {})),
        labels=dict(payload.get("labels", {})),
        owner_refs=list(payload.get("ownerRefs", [])),
        finalizers=list(payload.get("finalizers", [])),
        ttl_after_finished_secs=payload.get("ttlAfterFinishedSecs"),
        eviction_policy=EvictionPolicy(payload.get("evictionPolicy", "Requeue")),
        kind=ObjectKind(payload.get("objectKind", "service")),
        image=payload.get("image"),
        delegate_to=payload.get("delegateTo"),
    )


class Recorder:
    """Builds log records against a live state and accumulates them in order."""

    def __init__(self, state: ClusterState):
        self.state = state
        self.records: list[dict] = []

    def _util(self, node_id: Optional[str]) -> Optional[float]:
        if node_id is None:
            return None
        node = self.state.nodes.get(node_id)
        if node is None or node.status is not NodeStatus.UP:
            return None
        return cluster.utilization(self.state, node)

    def _emit(self, time: int, kind: str, **payload) -> dict:
        record = {"time": time, "kind": kind}
        record.update(payload)
        self.records.append(record)
        return record

    # -- nodes ------------------------------------------------------------

    def node_up(self, time: int, node_id: str):
        self._emit(time, NODE_UP, node=node_id, util=self._util(node_id))

    def node_down(self, time: int, node_id: str):
        self._emit(time, NODE_DOWN, node=node_id)

    # -- service lifecycle -------------------------------------------------

    def service_submitted(self, time: int, spec: ServiceSpec, priority: int):
        self._emit(
            time,
            SERVICE_SUBMITTED,
            service=spec.id,
            priority=priority,
            spec=spec_to_payload(spec),
        )

    def service_placed(self, time: int, service_id: str, node_id: str, cause: str):
        self._emit(
            time,
            SERVICE_PLACED,
            service=service_id,
            node=node_id,
            cause=cause,
            util=self._util(node_id),
        )

    def service_evicted(
        self,
        time: int,
        service_id: str,
        node_id: str,
        cause: str,
        victim_priority: Optional[int] = None,
        preemptor: Optional[str] = None,
        preemptor_priority: Optional[int] = None,
    ):
        extra = {}
        if preemptor is not None:
            extra = {
                "victimPriority": victim_priority,
                "preemptor": preemptor,
                "preemptorPriority": preemptor_priority,
            }
        self._emit(
            time,
            SERVICE_EVICTED,
            service=service_id,
            node=node_id,
            cause=cause,
            **extra,
            util=self._util(node_id),
        )

    def service_requeued(self, time: int, service_id: str, priority: int):
        self._emit(time, SERVICE_REQUEUED, service=service_id, priority=priority)

    def service_completed(self, time: int, service_id: str, outcome: str, node_id: Optional[str]):
        self._emit(
            time,
            SERVICE_COMPLETED,
            service=service_id,
            outcome=outcome,
            node=node_id,
            util=self._util(node_id),
        )

    def service_terminated(self, time: int, service_id: str, reason: str):
        self._emit(time, SERVICE_TERMINATED, service=service_id, reason=reason)

    def service_deleting(self, time: int, object_id: str, mode: str, cause: str, node_id: Optional[str]):
        self._emit(
            time,
            SERVICE_DELETING,
            object=object_id,
            mode=mode,
            cause=cause,
            node=node_id,
            util=self._util(node_id),
        )

    def service_deleted(self, time: int, object_id: str, category: str, node_id: Optional[str]):
        self._emit(
            time,
            SERVICE_DELETED,
            object=object_id,
            category=category,
            node=node_id,
            util=self._util(node_id),
        )

    def finalizer_cleared(self, time: int, object_id: str, finalizer: str):
        self._emit(time, FINALIZER_CLEARED, object=object_id, finalizer=finalizer)

    def progress_delegated(self, time: int, from_id: str, to_id: str, amount: int):
        self._emit(time, PROGRESS_DELEGATED, **{"from": from_id, "to": to_id, "amount": amount})

    # -- eviction overhead holds --------------------------------------------

    def hold_placed(self, time: int, node_id: str, service_id: str, request: ResourceVector, until: int):
        self._emit(
            time,
            HOLD_PLACED,
            node=node_id,
            service=service_id,
            request=request.to_payload(),
            until=until,
        )

    def hold_released(self, time: int, node_id: str, service_id: str):
        self._emit(time, HOLD_RELEASED, node=node_id, service=service_id)

    # -- rebalancing --------------------------------------------------------

    def migration(self, time: int, service_id: str, source: str, target: str):
        self._emit(time, MIGRATION, service=service_id, source=source, target=target)

    def migration_fallback(self, time: int, service_id: str, target: str):
        self._emit(time, MIGRATION_FALLBACK, service=service_id, target=target)

    def rebalance_skipped(self, time: int, reason: str):
        self._emit(time, REBALANCE_SKIPPED, reason=reason)

    # -- images --------------------------------------------------------------

    def image_used(self, time: int, image_id: str, service_id: str):
        self._emit(time, IMAGE_USED, image=image_id, service=service_id)

    def image_released(self, time: int, image_id: str, service_id: str):
        self._emit(time, IMAGE_RELEASED, image=image_id, service=service_id)

    def image_pruned(self, time: int, image_id: str, size_bytes: int, reason: str):
        self._emit(time, IMAGE_PRUNED, image=image_id, bytes=size_bytes, reason=reason)

    # -- misc -----------------------------------------------------------------

    def priority_class_updated(self, time: int, pc: PriorityClass):
        self._emit(
            time,
            PRIORITY_CLASS_UPDATED,
            name=pc.name,
            value=pc.value,
            globalDefault=pc.global_default,
            description=pc.description,
        )

    def event_ignored(self, time: int, kind: str, reason: str):
        self._emit(time, EVENT_IGNORED, event=kind, reason=reason)

    def run_ended(self, time: int, final_imbalance: Optional[float], utils: dict):
        self._emit(
            time,
            RUN_ENDED,
            finalImbalance=final_imbalance,
            utilization=dict(sorted(utils.items())),
        )


def serialize_records(records: Iterable[dict]) -> str:
    lines = [json.dumps(rec, separators=(",", ":")) for rec in records]
    return "".join(line + "\n" for line in lines)


def parse_log_text(text: str) -> list[dict]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SimulationError(f"malformed log line {lineno}: {exc}") from exc
        if not isinstance(record, dict) or "kind" not in record or "time" not in record:
            raise SimulationError(f"malformed log line {lineno}: missing kind/time")
        records.append(record)
    return records


def replay(state: ClusterState, records: Iterable[dict]) -> ClusterState:
    """Apply log records to an initial state, reconstructing the final state.

    This applies mutations literally; it runs no scheduler, rebalancer, or
    GC logic of its own.
    """
    for index, rec in enumerate(records):
        try:
            _apply(state, rec)
        except Exception as exc:
            raise SimulationError(f"replay failed at record {index}: {exc}") from exc
    return state


def _apply(state: ClusterState, rec: dict) -> None:
    kind = rec["kind"]
    time = rec["time"]
    state.clock = max(state.clock, time)
    if kind == NODE_UP:
        state.nodes[rec["node"]].status = NodeStatus.UP
    elif kind == NODE_DOWN:
        state.nodes[rec["node"]].status = NodeStatus.DOWN
    elif kind == SERVICE_SUBMITTED:
        spec = spec_from_payload(rec["service"], rec["spec"])
        state.services[spec.id] = Service(spec, ServiceStatus(enqueue_time=time))
    elif kind == SERVICE_PLACED:
        svc = state.services[rec["service"]]
        svc.status.phase = Phase.RUNNING
        svc.status.node_id = rec["node"]
        state.nodes[rec["node"]].placed.add(rec["service"])
    elif kind == SERVICE_EVICTED:
        svc = state.services[rec["service"]]
        state.nodes[rec["node"]].placed.discard(rec["service"])
        svc.status.node_id = None
        svc.status.phase = Phase.PENDING
        svc.status.progress_lost_count += 1
    elif kind == SERVICE_REQUEUED:
        state.services[rec["service"]].status.enqueue_time = time
    elif kind == SERVICE_COMPLETED:
        svc = state.services[rec["service"]]
        cluster.release_service(state, rec["service"])
        svc.status.phase = Phase(rec["outcome"])
        svc.status.finish_time = time
    elif kind == SERVICE_TERMINATED:
        svc = state.services[rec["service"]]
        cluster.release_service(state, rec["service"])
        svc.status.phase = Phase.TERMINATED
        svc.status.finish_time = time
    elif kind == SERVICE_DELETING:
        svc = state.services[rec["object"]]
        cluster.release_service(state, rec["object"])
        svc.status.phase = Phase.DELETING
        svc.status.finish_time = None
        svc.status.deleting_mode = DeletionMode(rec["mode"])
        svc.status.delete_cause = rec["cause"]
    elif kind == SERVICE_DELETED:
        oid = rec["object"]
        if oid in state.services:
            cluster.release_service(state, oid)
            del state.services[oid]
        state.tombstones.add(oid)
    elif kind == FINALIZER_CLEARED:
        finalizers = state.services[rec["object"]].spec.finalizers
        finalizers.remove(rec["finalizer"])
    elif kind == PROGRESS_DELEGATED:
        src = state.services[rec["from"]]
        dst = state.services[rec["to"]]
        src.status.progress_lost_count -= rec["amount"]
        dst.status.progress_lost_count += rec["amount"]
    elif kind == HOLD_PLACED:
        node = state.nodes[rec["node"]]
        node.draining[rec["service"]] = Hold(
            ResourceVector.from_payload(rec["request"]), rec["until"]
        )
    elif kind == HOLD_RELEASED:
        state.nodes[rec["node"]].draining.pop(rec["service"], None)
    elif kind == IMAGE_USED:
        img = state.images[rec["image"]]
        img.in_use_by.add(rec["service"])
        img.last_used = time
    elif kind == IMAGE_RELEASED:
        img = state.images[rec["image"]]
        img.in_use_by.discard(rec["service"])
        img.last_used = time
    elif kind == IMAGE_PRUNED:
        del state.images[rec["image"]]
    elif kind == PRIORITY_CLASS_UPDATED:
        state.priority_classes[rec["name"]] = PriorityClass(
            rec["name"], rec["value"], rec["globalDefault"], rec["description"]
        )
    elif kind in (MIGRATION, MIGRATION_FALLBACK, REBALANCE_SKIPPED, EVENT_IGNORED, RUN_ENDED):
        pass  # markers; no direct state change beyond the clock
    else:
        raise SimulationError(f"unknown record kind {kind!r}")
