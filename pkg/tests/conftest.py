import importlib.resources
import random

import pytest

from orchsim.cluster import (
    ClusterState,
    ImageRecord,
    Node,
    NodeStatus,
    Phase,
    PriorityClass,
    Service,
    ServiceSpec,
    ServiceStatus,
)
from orchsim.eventlog import Recorder
from orchsim.resources import ResourceVector

GIB = 2**30


def golden_path(name: str) -> str:
    return str(importlib.resources.files("orchsim") / "scenarios" / f"{name}.scenario")


@pytest.fixture
def preemption_scenario_path():
    return golden_path("preemption")


@pytest.fixture
def rebalance_scenario_path():
    return golden_path("rebalance")


@pytest.fixture
def gc_scenario_path():
    return golden_path("gc")


def rv(cpu=0, mem=0, disk=0) -> ResourceVector:
    return ResourceVector(cpu, mem, disk)


def make_node(node_id, cpu=4000, mem=8 * GIB, disk=100 * GIB, labels=None, status=NodeStatus.UP):
    return Node(node_id, rv(cpu, mem, disk), dict(labels or {}), status)


def make_service(service_id, cpu=0, mem=0, disk=0, **spec_kwargs) -> Service:
    spec = ServiceSpec(id=service_id, request=rv(cpu, mem, disk), **spec_kwargs)
    return Service(spec, ServiceStatus())


def add_service(state: ClusterState, service: Service, node_id=None) -> Service:
    state.services[service.spec.id] = service
    if node_id is not None:
        node = state.nodes[node_id]
        node.placed.add(service.spec.id)
        service.status.phase = Phase.RUNNING
        service.status.node_id = node_id
    return service


def make_state(*nodes) -> ClusterState:
    state = ClusterState()
    for node in nodes:
        state.nodes[node.id] = node
    return state


def recorder_for(state: ClusterState) -> Recorder:
    return Recorder(state)


PRIORITY_CLASSES = {
    f"p{i}": PriorityClass(f"p{i}", i * 1000, False, f"test level {i}") for i in range(4)
}


def random_cluster(rng: random.Random, max_nodes=3, max_services=6):
    """A valid random cluster: Up nodes with services already placed, plus
    one pending incoming service. Priorities are drawn from {0..3}*1000."""
    state = ClusterState()
    state.priority_classes = dict(PRIORITY_CLASSES)
    n_nodes = rng.randint(1, max_nodes)
    for i in range(n_nodes):
        cpu = rng.choice([2000, 3000, 4000])
        mem = rng.choice([4, 8]) * GIB
        state.nodes[f"n{i}"] = Node(f"n{i}", rv(cpu, mem, 100 * GIB))
    n_services = rng.randint(0, max_services - 1)
    placed_count = 0
    for j in range(n_services):
        cpu = rng.choice([250, 500, 1000, 1500, 2000])
        mem = rng.choice([1, 2, 4]) * GIB
        svc = make_service(
            f"s{j}", cpu, mem, rng.choice([1, 5]) * GIB,
            priority_class_name=f"p{rng.randint(0, 3)}",
        )
        state.services[svc.spec.id] = svc
        candidates = []
        for nid in sorted(state.nodes):
            node = state.nodes[nid]
            used = sum(
                (state.services[s].spec.request for s in node.placed),
                start=rv(),
            )
            if (node.capacity - used).covers(svc.spec.request):
                candidates.append(nid)
        if candidates and rng.random() < 0.85:
            nid = rng.choice(candidates)
            state.nodes[nid].placed.add(svc.spec.id)
            svc.status.phase = Phase.RUNNING
            svc.status.node_id = nid
            placed_count += 1
        else:
            del state.services[svc.spec.id]
    incoming = make_service(
        "incoming",
        rng.choice([500, 1000, 1500, 2000, 2500, 3000, 3500]),
        rng.choice([1, 2, 4, 6]) * GIB,
        GIB,
        priority_class_name=f"p{rng.randint(0, 3)}",
    )
    state.services[incoming.spec.id] = incoming
    return state, incoming.spec


def make_image(image_id, size, last_used=0, tags=None, in_use_by=()):
    return ImageRecord(image_id, size, last_used, dict(tags or {}), set(in_use_by))
