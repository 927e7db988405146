"""Object lifecycle management: cascading deletion, finalizers, TTL sweeps,
and policy-driven image pruning.

Deletion never removes an object that still carries finalizers, and images
referenced by a running service are never pruned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from . import cluster, scheduler
from .cluster import (
    ClusterState,
    DeletionMode,
    ImageRecord,
    ObjectKind,
    Phase,
)
from .errors import SimulationError
from .eventlog import Recorder


class DeletionRequest(NamedTuple):
    object_id: str
    mode: DeletionMode


@dataclass
class GcPolicyRule:
    """One step of an ordered image-pruning chain.

    ``match_all`` rules may also delete internal-tagged images that normal
    rules skip. ``filters`` is a list of tag selectors combined as OR.
    """

    match_all: bool = False
    filters: list[dict[str, str]] = field(default_factory=list)
    keep_duration_secs: Optional[int] = None
    keep_bytes: Optional[int] = None

    def __post_init__(self):
        if not self.match_all and self.keep_duration_secs is None and self.keep_bytes is None:
            raise ValueError("gc policy rule constrains nothing")


@dataclass
class TtlConfig:
    terminated_service_retention_secs: int = 2_592_000  # 30 days
    unused_image_retention_secs: int = 10_368_000  # 120 days
    job_retention_secs: int = 604_800  # 1 week

    def __post_init__(self):
        for name in (
            "terminated_service_retention_secs",
            "unused_image_retention_secs",
            "job_retention_secs",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


INTERNAL_TAG = "internal"


def _matches_filters(tags: dict[str, str], rule: GcPolicyRule) -> bool:
    if not rule.match_all and tags.get(INTERNAL_TAG) == "true":
        return False
    if not rule.filters:
        return True
    return any(
        all(tags.get(k) == v for k, v in selector.items()) for selector in rule.filters
    )


def _finish_delete(
    state: ClusterState, rec: Recorder, object_id: str, category: str, now: int
) -> None:
    svc = state.services[object_id]
    scheduler.release_image(state, rec, object_id, now)
    node_id = cluster.release_service(state, object_id)
    del state.services[object_id]
    state.tombstones.add(object_id)
    rec.service_deleted(now, object_id, category, node_id)


def _mark_deleting(
    state: ClusterState,
    rec: Recorder,
    object_id: str,
    mode: DeletionMode,
    cause: str,
    now: int,
) -> None:
    svc = state.services[object_id]
    scheduler.release_image(state, rec, object_id, now)
    node_id = cluster.release_service(state, object_id)
    svc.status.phase = Phase.DELETING
    svc.status.finish_time = None  # Deleting is not a finished phase
    svc.status.deleting_mode = mode
    svc.status.delete_cause = cause
    rec.service_deleting(now, object_id, mode.value, cause, node_id)


def _delete_or_mark(
    state: ClusterState,
    rec: Recorder,
    object_id: str,
    mode: DeletionMode,
    category: str,
    now: int,
) -> None:
    if state.services[object_id].spec.finalizers:
        _mark_deleting(state, rec, object_id, mode, category, now)
    else:
        _finish_delete(state, rec, object_id, category, now)


def delete_object(
    state: ClusterState, request: DeletionRequest, rec: Recorder, now: int
) -> ClusterState:
    """Delete an object with cascading semantics.

    Foreground: the owner enters Deleting, every transitive dependent is
    deleted first (depth-first, children before parents, lexicographic
    among siblings), and the owner goes last once its finalizers are clear.
    Background: the owner is tombstoned immediately and dependents are left
    for subsequent sweeps to collect as orphans.
    """
    object_id = request.object_id
    if object_id in state.images:
        _delete_image(state, rec, object_id, now)
        return state
    svc = state.services.get(object_id)
    if svc is None:
        raise SimulationError(f"unknown object: {object_id}")
    if svc.status.phase is Phase.DELETING:
        return state  # request recorded; never double-delete

    if request.mode is DeletionMode.BACKGROUND:
        _delete_or_mark(state, rec, object_id, DeletionMode.BACKGROUND, "manual", now)
        return state

    _mark_deleting(state, rec, object_id, DeletionMode.FOREGROUND, "manual", now)

    def visit(oid: str) -> None:
        for dep in state.dependents_of(oid):
            visit(dep)
            if dep in state.services and state.services[dep].status.phase is not Phase.DELETING:
                _delete_or_mark(state, rec, dep, DeletionMode.FOREGROUND, "cascade", now)

    visit(object_id)
    owner = state.services.get(object_id)
    if owner is not None and not owner.spec.finalizers and not state.dependents_of(object_id):
        _finish_delete(state, rec, object_id, "manual", now)
    return state


def _delete_image(state: ClusterState, rec: Recorder, image_id: str, now: int) -> None:
    img = state.images[image_id]
    if img.in_use_by:
        raise SimulationError(f"image in use: {image_id}")
    del state.images[image_id]
    rec.image_pruned(now, image_id, img.size_bytes, reason="manual")


def clear_finalizer(
    state: ClusterState, object_id: str, finalizer: str, rec: Recorder, now: int
) -> ClusterState:
    """Remove one finalizer from an object that is in the Deleting phase.

    The object only becomes removable on the next sweep once its list is
    empty.
    """
    svc = state.services.get(object_id)
    if svc is None:
        raise SimulationError(f"unknown object: {object_id}")
    if svc.status.phase is not Phase.DELETING:
        raise SimulationError(f"not deleting: {object_id}")
    if finalizer not in svc.spec.finalizers:
        raise SimulationError(f"unknown finalizer: {finalizer}")
    svc.spec.finalizers.remove(finalizer)
    rec.finalizer_cleared(now, object_id, finalizer)
    return state


def _ttl_retention(svc, ttl: TtlConfig) -> int:
    if svc.spec.ttl_after_finished_secs is not None:
        return svc.spec.ttl_after_finished_secs
    if svc.spec.kind is ObjectKind.JOB:
        return ttl.job_retention_secs
    return ttl.terminated_service_retention_secs


def gc_sweep(
    state: ClusterState,
    ttl: TtlConfig,
    rec: Recorder,
    now: int,
    policy: Optional[list[GcPolicyRule]] = None,
) -> list[tuple[str, str]]:
    """One garbage-collection pass; idempotent at a fixed ``now``.

    Order: orphan collection, TTL expiry of finished services and jobs,
    finalizer progression, then image cleanup (idle-image TTL followed by
    the pruning policy chain, when one is configured).

    Returns (object id, category) pairs for everything removed.
    """
    deletions: list[tuple[str, str]] = []

    # 1. Orphans: live objects whose owners are all tombstoned.
    for sid in sorted(state.services):
        svc = state.services[sid]
        if svc.status.phase is Phase.DELETING:
            continue
        refs = svc.spec.owner_refs
        if refs and all(ref in state.tombstones for ref in refs):
            _delete_or_mark(state, rec, sid, DeletionMode.BACKGROUND, "orphan", now)
            if sid not in state.services:
                deletions.append((sid, "orphan"))

    # 2. TTL: finished services and jobs past their retention.
    for sid in sorted(state.services):
        svc = state.services[sid]
        if svc.status.phase not in (Phase.COMPLETED, Phase.TERMINATED):
            continue
        if svc.status.finish_time is None:
            continue
        category = "ttl-job" if svc.spec.kind is ObjectKind.JOB else "ttl-service"
        if svc.status.finish_time + _ttl_retention(svc, ttl) <= now:
            _delete_or_mark(state, rec, sid, DeletionMode.BACKGROUND, category, now)
            if sid not in state.services:
                deletions.append((sid, category))

    # 3. Finalizer progression: cleared Deleting objects become removable.
    #    Foreground owners additionally wait for their dependents to go.
    for sid in sorted(state.services):
        svc = state.services[sid]
        if svc.status.phase is not Phase.DELETING or svc.spec.finalizers:
            continue
        if svc.status.deleting_mode is DeletionMode.FOREGROUND and state.dependents_of(sid):
            continue
        category = svc.status.delete_cause or "finalizer"
        _finish_delete(state, rec, sid, category, now)
        deletions.append((sid, category))

    # 4. Images: idle-unreferenced TTL, then the policy chain.
    for iid in sorted(state.images, key=lambda i: (state.images[i].last_used, i)):
        img = state.images[iid]
        if img.in_use_by:
            continue
        if now - img.last_used >= ttl.unused_image_retention_secs:
            del state.images[iid]
            rec.image_pruned(now, iid, img.size_bytes, reason="ttl")
            deletions.append((iid, "image-ttl"))
    if policy:
        state.images, pruned = prune_images(state.images, policy, now, rec)
        deletions.extend((iid, "image-policy") for iid, _, _ in pruned)
    return deletions


def prune_images(
    images: dict[str, ImageRecord],
    rules: list[GcPolicyRule],
    now: int,
    rec: Optional[Recorder] = None,
) -> tuple[dict[str, ImageRecord], list[tuple[str, int, int]]]:
    """Apply an ordered pruning chain to an image store.

    Each rule gathers unreferenced images matching its filters and idle at
    least its keep-duration, then deletes them oldest-first while the whole
    store exceeds the rule's keep-bytes (a rule without keep-bytes deletes
    every candidate). Later rules see the post-deletion store. Images that
    are in use are never candidates.

    Returns the surviving store and (image id, size, rule index) deletions.
    """
    if not rules:
        raise SimulationError("gc policy is empty")
    store = dict(images)
    deletions: list[tuple[str, int, int]] = []
    for index, rule in enumerate(rules):
        total = sum(img.size_bytes for img in store.values())
        candidates = [
            img
            for img in store.values()
            if not img.in_use_by
            and _matches_filters(img.tags, rule)
            and (
                rule.keep_duration_secs is None
                or now - img.last_used >= rule.keep_duration_secs
            )
        ]
        candidates.sort(key=lambda img: (img.last_used, img.id))
        for img in candidates:
            if rule.keep_bytes is not None and total <= rule.keep_bytes:
                break
            del store[img.id]
            total -= img.size_bytes
            deletions.append((img.id, img.size_bytes, index))
            if rec is not None:
                rec.image_pruned(now, img.id, img.size_bytes, reason=f"rule-{index}")
    return store, deletions
