"""Canonical cluster state: nodes, services, priority classes, and images.

All mutations go through the engine loop; everything here is either a plain
data container or a pure function over a state value.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

from .errors import SimulationError
from .resources import ResourceVector, sum_vectors

MAX_PRIORITY_VALUE = 1_000_000_000
MIN_PRIORITY_VALUE = -(2**31)

# Services carrying this label key are never selected for rebalancing moves.
NO_RESCHEDULE_LABEL = "no-reschedule"


class Phase(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    COMPLETED = "Completed"
    TERMINATED = "Terminated"
    DELETING = "Deleting"
    DELETED = "Deleted"


FINISHED_PHASES = (Phase.COMPLETED, Phase.TERMINATED, Phase.DELETED)


class NodeStatus(str, Enum):
    UP = "Up"
    DOWN = "Down"


class EvictionPolicy(str, Enum):
    REQUEUE = "Requeue"
    DROP = "Drop"
    DELEGATE = "Delegate"


class ObjectKind(str, Enum):
    SERVICE = "service"
    JOB = "job"


class DeletionMode(str, Enum):
    FOREGROUND = "Foreground"
    BACKGROUND = "Background"


@dataclass
class PriorityClass:
    """Named priority level; services reference it by name."""

    name: str
    value: int
    global_default: bool = False
    description: str = ""

    def __post_init__(self):
        if not (MIN_PRIORITY_VALUE <= self.value <= MAX_PRIORITY_VALUE):
            raise ValueError(
                f"priority class {self.name!r} value {self.value} outside "
                f"[{MIN_PRIORITY_VALUE}, {MAX_PRIORITY_VALUE}]"
            )


@dataclass
class ServiceSpec:
    id: str
    request: ResourceVector
    priority_class_name: Optional[str] = None
    constraints: dict[str, str] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)
    owner_refs: list[str] = field(default_factory=list)
    finalizers: list[str] = field(default_factory=list)
    ttl_after_finished_secs: Optional[int] = None
    eviction_policy: EvictionPolicy = EvictionPolicy.REQUEUE
    kind: ObjectKind = ObjectKind.SERVICE
    image: Optional[str] = None
    delegate_to: Optional[str] = None


@dataclass
class ServiceStatus:
    phase: Phase = Phase.PENDING
    node_id: Optional[str] = None
    enqueue_time: int = 0
    finish_time: Optional[int] = None
    progress_lost_count: int = 0
    # Bookkeeping for deletions that cannot complete immediately (pending
    # finalizers or foreground dependents). Not part of the public contract.
    deleting_mode: Optional[DeletionMode] = None
    delete_cause: Optional[str] = None


@dataclass
class Service:
    spec: ServiceSpec
    status: ServiceStatus


class Hold(NamedTuple):
    """Resources still accounted to a node after an eviction, until the
    eviction overhead elapses at ``until``."""

    request: ResourceVector
    until: int


@dataclass
class Node:
    id: str
    capacity: ResourceVector
    labels: dict[str, str] = field(default_factory=dict)
    status: NodeStatus = NodeStatus.UP
    placed: set[str] = field(default_factory=set)
    draining: dict[str, Hold] = field(default_factory=dict)


@dataclass
class ImageRecord:
    id: str
    size_bytes: int
    last_used: int = 0
    tags: dict[str, str] = field(default_factory=dict)
    in_use_by: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError(f"image {self.id!r} size_bytes must be > 0")


@dataclass
class ClusterState:
    nodes: dict[str, Node] = field(default_factory=dict)
    services: dict[str, Service] = field(default_factory=dict)
    priority_classes: dict[str, PriorityClass] = field(default_factory=dict)
    images: dict[str, ImageRecord] = field(default_factory=dict)
    tombstones: set[str] = field(default_factory=set)
    clock: int = 0

    def snapshot(self) -> "ClusterState":
        return copy.deepcopy(self)

    def allocated(self, node: Node) -> ResourceVector:
        """Sum of requests of services placed on ``node``."""
        return sum_vectors(self.services[sid].spec.request for sid in node.placed)

    def free_resources(self, node: Node) -> ResourceVector:
        """Capacity minus placed requests minus draining holds.

        May go negative transiently only through bugs; raises in that case.
        """
        held = sum_vectors(h.request for h in node.draining.values())
        return node.capacity - self.allocated(node) - held

    def dependents_of(self, object_id: str) -> list[str]:
        """Live services that list ``object_id`` among their owners, sorted."""
        return sorted(
            sid
            for sid, svc in self.services.items()
            if object_id in svc.spec.owner_refs
        )


def match_constraints(node_labels: dict[str, str], selector: dict[str, str]) -> bool:
    """True iff every selector pair is present in the label map."""
    return all(node_labels.get(key) == value for key, value in selector.items())


def resource_fit(state: ClusterState, node: Node, request: ResourceVector) -> bool:
    """True iff the node's free resources cover ``request`` component-wise.

    Draining holds (space still being reclaimed after an eviction) count as
    occupied.
    """
    if node.status is not NodeStatus.UP:
        raise SimulationError(f"node unavailable: {node.id}")
    return state.free_resources(node).covers(request)


def utilization(state: ClusterState, node: Node) -> float:
    """Dominant share of a node: max over dimensions of allocated/capacity."""
    if node.status is not NodeStatus.UP:
        raise SimulationError(f"node unavailable: {node.id}")
    return state.allocated(node).dominant_share(node.capacity)


def place_service(state: ClusterState, service_id: str, node_id: str) -> None:
    """Mark a pending service as running on ``node_id``. Capacity-checked."""
    node = state.nodes[node_id]
    svc = state.services[service_id]
    if svc.status.phase is not Phase.PENDING:
        raise SimulationError(f"cannot place {service_id}: phase {svc.status.phase.value}")
    if not resource_fit(state, node, svc.spec.request):
        raise SimulationError(f"no room on {node_id} for {service_id}")
    node.placed.add(service_id)
    svc.status.phase = Phase.RUNNING
    svc.status.node_id = node_id


def release_service(state: ClusterState, service_id: str) -> Optional[str]:
    """Detach a service from its node, returning the node id (or None)."""
    svc = state.services[service_id]
    node_id = svc.status.node_id
    if node_id is not None:
        state.nodes[node_id].placed.discard(service_id)
        svc.status.node_id = None
    return node_id


def _check_service(state: ClusterState, sid: str, svc: Service, out: list[str]) -> None:
    status, spec = svc.status, svc.spec
    if (status.node_id is not None) != (status.phase is Phase.RUNNING):
        out.append(f"service {sid}: node_id set iff phase Running violated")
    if (status.finish_time is not None) != (status.phase in FINISHED_PHASES):
        out.append(f"service {sid}: finish_time set iff finished violated")
    if status.node_id is not None:
        node = state.nodes.get(status.node_id)
        if node is None:
            out.append(f"service {sid}: placed on unknown node {status.node_id}")
        else:
            if node.status is not NodeStatus.UP:
                out.append(f"service {sid} placed on Down node {status.node_id}")
            if sid not in node.placed:
                out.append(f"service {sid}: node {status.node_id} does not list it")
    for ref in spec.owner_refs:
        if ref == sid:
            out.append(f"service {sid}: owns itself")
        elif ref not in state.services and ref not in state.tombstones:
            out.append(f"service {sid}: owner {ref} unknown")
    if spec.image is not None and spec.image not in state.images:
        out.append(f"service {sid}: image {spec.image} unknown")


def _check_node(state: ClusterState, nid: str, node: Node, out: list[str]) -> None:
    for sid in node.placed:
        if sid not in state.services:
            out.append(f"node {nid}: placed id {sid} unknown")
        elif state.services[sid].status.node_id != nid:
            out.append(f"node {nid}: service {sid} does not point back")
    if node.status is NodeStatus.DOWN:
        if node.placed:
            out.append(f"node {nid}: Down but has placed services")
        return
    used = sum_vectors(
        state.services[sid].spec.request for sid in node.placed if sid in state.services
    )
    used = used + sum_vectors(h.request for h in node.draining.values())
    if not node.capacity.covers(used):
        out.append(f"node {nid}: placed requests exceed capacity")


def validate_state(state: ClusterState) -> list[str]:
    """Check every structural invariant; returns one message per violation.

    Violations are data, not failures: an empty list means the state is
    sound.
    """
    out: list[str] = []
    defaults = [name for name, pc in state.priority_classes.items() if pc.global_default]
    if len(defaults) > 1:
        out.append("multiple global default priority classes: " + ", ".join(sorted(defaults)))
    for name, pc in state.priority_classes.items():
        if not (MIN_PRIORITY_VALUE <= pc.value <= MAX_PRIORITY_VALUE):
            out.append(f"priority class {name}: value {pc.value} out of range")
    for sid in sorted(state.services):
        _check_service(state, sid, state.services[sid], out)
    for nid in sorted(state.nodes):
        _check_node(state, nid, state.nodes[nid], out)
    for iid in sorted(state.images):
        img = state.images[iid]
        if img.size_bytes <= 0:
            out.append(f"image {iid}: size_bytes must be > 0")
        if img.last_used > state.clock:
            out.append(f"image {iid}: last_used in the future")
        for sid in img.in_use_by:
            if sid not in state.services:
                out.append(f"image {iid}: in_use_by unknown service {sid}")
    for dead in sorted(state.tombstones & set(state.services)):
        out.append(f"object {dead}: both live and tombstoned")
    out.extend(_ownership_cycles(state))
    return out


def _ownership_cycles(state: ClusterState) -> list[str]:
    # Cycles are rejected at creation; this is a defensive re-check.
    colors: dict[str, int] = {}
    cycles: list[str] = []

    def visit(sid: str) -> bool:
        colors[sid] = 1
        for ref in state.services[sid].spec.owner_refs:
            if ref not in state.services:
                continue
            c = colors.get(ref, 0)
            if c == 1 or (c == 0 and visit(ref)):
                return True
        colors[sid] = 2
        return False

    for sid in sorted(state.services):
        if colors.get(sid, 0) == 0 and visit(sid):
            cycles.append(f"service {sid}: ownership cycle")
    return cycles
