"""Priority-queue scheduling with preemption of lower-priority services.

Placement first tries a plain resource fit on the least-utilized matching
node. When nothing fits, a preemption plan evicts a minimal set of strictly
lower-priority services from the best candidate node; the evicted services
are requeued, dropped, or delegated according to their own policy.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

from . import cluster
from .cluster import (
    ClusterState,
    EvictionPolicy,
    Hold,
    NodeStatus,
    Phase,
    PriorityClass,
    ServiceSpec,
)
from .errors import SimulationError
from .eventlog import Recorder
from .resources import ZERO, ResourceVector, sum_vectors

# Exact victim-set search is used while the number of eligible victims on a
# node keeps the subset space at or below this bound; greedy selection with
# pruning takes over beyond it.
EXACT_SEARCH_LIMIT = 12


def resolve_priority(spec: ServiceSpec, classes: dict[str, PriorityClass]) -> int:
    """Priority value for a service: its named class, else the global
    default class, else 0."""
    if spec.priority_class_name is not None:
        pc = classes.get(spec.priority_class_name)
        if pc is None:
            raise SimulationError(f"unknown priority class: {spec.priority_class_name}")
        return pc.value
    for pc in classes.values():
        if pc.global_default:
            return pc.value
    return 0


class SchedulingQueue:
    """Max-priority queue with FIFO order among equal priorities.

    Sequence numbers are assigned at first enqueue and preserved when an
    entry is pushed back after a failed placement attempt, so queue order
    is stable across scheduling cycles.
    """

    def __init__(self):
        self._heap: list[tuple[int, int, str]] = []
        self._ids: set[str] = set()
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, service_id: str) -> bool:
        return service_id in self._ids

    def enqueue(self, service_id: str, priority: int, seq: Optional[int] = None) -> "SchedulingQueue":
        if service_id in self._ids:
            raise SimulationError(f"already queued: {service_id}")
        if seq is None:
            seq = self._next_seq
            self._next_seq += 1
        heapq.heappush(self._heap, (-priority, seq, service_id))
        self._ids.add(service_id)
        return self

    def dequeue(self) -> tuple[str, int, int]:
        """Pop the head entry as (service_id, priority, seq)."""
        if not self._heap:
            raise SimulationError("queue empty")
        neg, seq, service_id = heapq.heappop(self._heap)
        self._ids.discard(service_id)
        return service_id, -neg, seq

    def remove(self, service_id: str) -> None:
        if service_id not in self._ids:
            return
        self._heap = [e for e in self._heap if e[2] != service_id]
        heapq.heapify(self._heap)
        self._ids.discard(service_id)

    def entries(self) -> list[tuple[str, int, int]]:
        """Entries in dequeue order, without consuming the queue."""
        return [(sid, -neg, seq) for neg, seq, sid in sorted(self._heap)]

    def reprioritize(self, resolver: Callable[[str], int]) -> None:
        """Recompute every entry's priority, keeping sequence numbers."""
        self._heap = [(-resolver(sid), seq, sid) for neg, seq, sid in self._heap]
        heapq.heapify(self._heap)


@dataclass
class PreemptionPlan:
    node_id: str
    victims: list[str]
    freed: ResourceVector
    max_victim_priority: int

    @property
    def victim_count(self) -> int:
        return len(self.victims)


def find_feasible_node(state: ClusterState, spec: ServiceSpec) -> Optional[str]:
    """Least-utilized Up node that matches constraints and fits the request;
    ties break on lexicographic node id. None when nothing fits."""
    best: Optional[tuple[float, str]] = None
    for node_id in sorted(state.nodes):
        node = state.nodes[node_id]
        if node.status is not NodeStatus.UP:
            continue
        if not cluster.match_constraints(node.labels, spec.constraints):
            continue
        if not cluster.resource_fit(state, node, spec.request):
            continue
        key = (cluster.utilization(state, node), node_id)
        if best is None or key < best:
            best = key
    return best[1] if best else None


def _victim_order_key(state: ClusterState, node, sid: str) -> tuple:
    svc = state.services[sid]
    prio = resolve_priority(svc.spec, state.priority_classes)
    share = svc.spec.request.dominant_share(node.capacity)
    return (prio, -share, sid)


def _exact_victims(state, node, pool, free, request) -> Optional[list[str]]:
    """Search all victim subsets; pick the one minimizing
    (max victim priority, count, lexicographic victim ids)."""
    best = None
    prio_of = {
        sid: resolve_priority(state.services[sid].spec, state.priority_classes)
        for sid in pool
    }
    # All sizes must be searched: a larger subset of lower-priority victims
    # beats a smaller one containing a higher-priority victim.
    for size in range(1, len(pool) + 1):
        for combo in combinations(sorted(pool), size):
            freed = sum_vectors(state.services[sid].spec.request for sid in combo)
            if not (free + freed).covers(request):
                continue
            key = (max(prio_of[s] for s in combo), size, combo)
            if best is None or key < best[0]:
                best = (key, list(combo))
    if best is None:
        return None
    return best[1]


def _greedy_victims(state, node, pool, free, request) -> Optional[list[str]]:
    ordered = sorted(pool, key=lambda sid: _victim_order_key(state, node, sid))
    chosen: list[str] = []
    freed = ZERO
    for sid in ordered:
        chosen.append(sid)
        freed = freed + state.services[sid].spec.request
        if (free + freed).covers(request):
            break
    else:
        return None
    # Prune victims that are not needed for feasibility, in selection order.
    for sid in list(chosen):
        trial = sum_vectors(
            state.services[v].spec.request for v in chosen if v != sid
        )
        if (free + trial).covers(request):
            chosen.remove(sid)
    return chosen


def plan_preemption(state: ClusterState, spec: ServiceSpec) -> Optional[PreemptionPlan]:
    """Choose a node and a minimal set of strictly-lower-priority victims
    whose eviction makes the incoming service fit.

    Candidate nodes are ranked by (lowest max victim priority, fewest
    victims, lexicographic node id). Returns None when no node works, in
    which case the service is simply scheduled later.
    """
    incoming = resolve_priority(spec, state.priority_classes)
    best: Optional[tuple[tuple, PreemptionPlan]] = None
    for node_id in sorted(state.nodes):
        node = state.nodes[node_id]
        if node.status is not NodeStatus.UP:
            continue
        if not cluster.match_constraints(node.labels, spec.constraints):
            continue
        pool = [
            sid
            for sid in sorted(node.placed)
            if resolve_priority(state.services[sid].spec, state.priority_classes) < incoming
        ]
        if not pool:
            continue
        free = state.free_resources(node)
        total = sum_vectors(state.services[sid].spec.request for sid in pool)
        if not (free + total).covers(spec.request):
            continue
        if len(pool) <= EXACT_SEARCH_LIMIT:
            victims = _exact_victims(state, node, pool, free, spec.request)
        else:
            victims = _greedy_victims(state, node, pool, free, spec.request)
        if not victims:
            continue
        victims = sorted(victims, key=lambda sid: _victim_order_key(state, node, sid))
        freed = sum_vectors(state.services[sid].spec.request for sid in victims)
        max_prio = max(
            resolve_priority(state.services[sid].spec, state.priority_classes)
            for sid in victims
        )
        plan = PreemptionPlan(node_id, victims, freed, max_prio)
        key = (max_prio, len(victims), node_id)
        if best is None or key < best[0]:
            best = (key, plan)
    return best[1] if best else None


def eviction_action(state: ClusterState, spec: ServiceSpec) -> tuple[str, Optional[str]]:
    """Resolve what happens to an evicted service per its policy.

    Returns ("requeue"|"drop"|"delegate", sibling_id). Delegation falls back
    to requeue when the named sibling is not currently running.
    """
    if spec.eviction_policy is EvictionPolicy.DROP:
        return "drop", None
    if spec.eviction_policy is EvictionPolicy.DELEGATE:
        sibling = spec.delegate_to
        if sibling is not None:
            peer = state.services.get(sibling)
            if peer is not None and peer.status.phase is Phase.RUNNING:
                return "delegate", sibling
        return "requeue", None
    return "requeue", None


@dataclass
class CycleResult:
    placements: list[tuple[str, str]] = field(default_factory=list)
    evictions: list[str] = field(default_factory=list)
    holds: list[tuple[str, str, int]] = field(default_factory=list)  # (node, service, until)


def place_and_record(state, rec: Recorder, service_id: str, node_id: str, now: int, cause: str):
    cluster.place_service(state, service_id, node_id)
    rec.service_placed(now, service_id, node_id, cause)
    spec = state.services[service_id].spec
    if spec.image is not None and spec.image in state.images:
        img = state.images[spec.image]
        img.in_use_by.add(service_id)
        img.last_used = now
        rec.image_used(now, spec.image, service_id)


def release_image(state: ClusterState, rec: Recorder, service_id: str, now: int) -> None:
    spec = state.services[service_id].spec
    if spec.image is not None and spec.image in state.images:
        img = state.images[spec.image]
        if service_id in img.in_use_by:
            img.in_use_by.discard(service_id)
            img.last_used = now
            rec.image_released(now, spec.image, service_id)


def evict_service(
    state: ClusterState,
    queue: SchedulingQueue,
    rec: Recorder,
    service_id: str,
    cause: str,
    now: int,
    requeue: bool = True,
    victim_priority: Optional[int] = None,
    preemptor: Optional[str] = None,
    preemptor_priority: Optional[int] = None,
) -> None:
    """Remove a running service from its node and apply its eviction policy.

    ``requeue=False`` leaves the service Pending without a queue entry
    (used for migrations, which re-place the service themselves).
    """
    svc = state.services[service_id]
    release_image(state, rec, service_id, now)
    node_id = cluster.release_service(state, service_id)
    svc.status.phase = Phase.PENDING
    svc.status.progress_lost_count += 1
    rec.service_evicted(
        now,
        service_id,
        node_id,
        cause,
        victim_priority=victim_priority,
        preemptor=preemptor,
        preemptor_priority=preemptor_priority,
    )
    if not requeue:
        return
    action, sibling = eviction_action(state, svc.spec)
    if action == "drop":
        svc.status.phase = Phase.TERMINATED
        svc.status.finish_time = now
        rec.service_terminated(now, service_id, reason="evicted-drop")
    elif action == "delegate":
        svc.status.phase = Phase.TERMINATED
        svc.status.finish_time = now
        rec.service_terminated(now, service_id, reason="evicted-delegate")
        amount = svc.status.progress_lost_count
        svc.status.progress_lost_count = 0
        state.services[sibling].status.progress_lost_count += amount
        rec.progress_delegated(now, service_id, sibling, amount)
    else:
        priority = resolve_priority(svc.spec, state.priority_classes)
        svc.status.enqueue_time = now
        queue.enqueue(service_id, priority)
        rec.service_requeued(now, service_id, priority)


def schedule_cycle(
    state: ClusterState,
    queue: SchedulingQueue,
    rec: Recorder,
    now: int,
    eviction_delay: int = 1,
) -> CycleResult:
    """Run one scheduling pass over the queue.

    Each queued entry gets exactly one attempt: plain placement, then
    preemption. When preemption fires with a nonzero eviction delay, the
    freed resources stay held until ``now + delay`` and the preemptor stays
    queued; it retries once the hold expires.
    """
    result = CycleResult()
    attempted: set[str] = set()
    stash: list[tuple[str, int, int]] = []

    def take_next() -> Optional[tuple[str, int, int]]:
        while queue:
            entry = queue.dequeue()
            if entry[0] in attempted:
                stash.append(entry)
                continue
            return entry
        return None

    while True:
        entry = take_next()
        if entry is None:
            break
        service_id, priority, seq = entry
        attempted.add(service_id)
        svc = state.services.get(service_id)
        if svc is None or svc.status.phase is not Phase.PENDING:
            continue  # deleted or completed while queued; drop the entry
        node_id = find_feasible_node(state, svc.spec)
        if node_id is not None:
            place_and_record(state, rec, service_id, node_id, now, cause="schedule")
            result.placements.append((service_id, node_id))
            continue
        plan = plan_preemption(state, svc.spec)
        if plan is None:
            stash.append(entry)
            continue
        node = state.nodes[plan.node_id]
        incoming_priority = resolve_priority(svc.spec, state.priority_classes)
        for victim in plan.victims:
            victim_priority = resolve_priority(
                state.services[victim].spec, state.priority_classes
            )
            evict_service(
                state,
                queue,
                rec,
                victim,
                "preempted",
                now,
                victim_priority=victim_priority,
                preemptor=service_id,
                preemptor_priority=incoming_priority,
            )
            result.evictions.append(victim)
            if eviction_delay > 0:
                request = state.services[victim].spec.request
                until = now + eviction_delay
                node.draining[victim] = Hold(request, until)
                rec.hold_placed(now, plan.node_id, victim, request, until)
                result.holds.append((plan.node_id, victim, until))
        if eviction_delay == 0:
            place_and_record(state, rec, service_id, plan.node_id, now, cause="preemption")
            result.placements.append((service_id, plan.node_id))
        else:
            stash.append(entry)

    for service_id, priority, seq in stash:
        if service_id in state.services and service_id not in queue:
            queue.enqueue(service_id, priority, seq=seq)
    return result
