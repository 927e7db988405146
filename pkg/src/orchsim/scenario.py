"""Declarative scenario files: parsing, validation, and serialization.

A scenario is a single JSON document declaring the cluster (nodes, priority
classes, services, images), the GC/TTL/rebalance configuration, and a
time-ordered event script. Priority levels may be written either as
Kubernetes-style priority classes (``priorityClassName``) or as plain
``level`` integers (1 = highest), which the loader maps onto synthesized
classes valued ``1000 * (11 - level)``.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Optional

from .cluster import (
    ClusterState,
    EvictionPolicy,
    ImageRecord,
    Node,
    NodeStatus,
    ObjectKind,
    PriorityClass,
    ServiceSpec,
    MAX_PRIORITY_VALUE,
    MIN_PRIORITY_VALUE,
)
from .engine import EVENT_KINDS, EngineConfig, SimEvent
from .errors import ScenarioError
from .lifecycle import GcPolicyRule, TtlConfig
from .rebalance import RebalanceConfig
from .resources import ResourceVector

LEVEL_CLASS_PREFIX = "level-"

_SIZE_UNITS = {
    "KB": 10**3,
    "MB": 10**6,
    "GB": 10**9,
    "KiB": 2**10,
    "MiB": 2**20,
    "GiB": 2**30,
}
_SIZE_RE = re.compile(r"^(\d+)(KiB|MiB|GiB|KB|MB|GB)$")
_DURATION_RE = re.compile(r"^(?:(\d+)h)?(?:(\d+)m)?(?:(\d+)s)?$")


@dataclass
class Diagnostic:
    code: str  # io | syntax | schema | reference | value
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.where}: {self.message}"


def parse_size(value: Any) -> int:
    """Bytes from an integer or a '512MB' / '26GB' / '8GiB' style string.

    Decimal units (KB/MB/GB) are powers of 1000; KiB/MiB/GiB are binary.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a size: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        match = _SIZE_RE.match(value)
        if match:
            return int(match.group(1)) * _SIZE_UNITS[match.group(2)]
    raise ValueError(f"not a size: {value!r}")


def parse_duration(value: Any) -> int:
    """Seconds from an integer or a '48h0m0s' style string."""
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value:
        match = _DURATION_RE.match(value)
        if match and any(match.groups()):
            hours, minutes, seconds = (int(g) if g else 0 for g in match.groups())
            return hours * 3600 + minutes * 60 + seconds
    raise ValueError(f"not a duration: {value!r}")


def parse_filters(value: Any) -> list[dict[str, str]]:
    """Filter selectors from 'k==v,k==v' strings or a list of mappings."""
    if isinstance(value, str):
        selectors = []
        for clause in value.split(","):
            clause = clause.strip()
            if not clause:
                continue
            if "==" not in clause:
                raise ValueError(f"bad filter clause: {clause!r}")
            key, _, val = clause.partition("==")
            selectors.append({key.strip(): val.strip()})
        return selectors
    if isinstance(value, list) and all(isinstance(sel, dict) for sel in value):
        return [dict(sel) for sel in value]
    raise ValueError(f"not a filter list: {value!r}")


def level_to_value(level: int) -> int:
    return 1000 * (11 - level)


def level_class_name(level: int) -> str:
    return f"{LEVEL_CLASS_PREFIX}{level}"


@dataclass
class Scenario:
    nodes: list[Node] = field(default_factory=list)
    priority_classes: list[PriorityClass] = field(default_factory=list)
    service_specs: dict[str, ServiceSpec] = field(default_factory=dict)
    service_order: list[str] = field(default_factory=list)
    service_levels: dict[str, int] = field(default_factory=dict)
    images: list[ImageRecord] = field(default_factory=list)
    gc_policy: list[GcPolicyRule] = field(default_factory=list)
    ttl: TtlConfig = field(default_factory=TtlConfig)
    rebalance: RebalanceConfig = field(default_factory=RebalanceConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    events: list[SimEvent] = field(default_factory=list)

    def build_initial_state(self) -> ClusterState:
        """Fresh cluster state: declared nodes, classes, and images; no
        services (those arrive via SubmitService events)."""
        state = ClusterState()
        for node in self.nodes:
            state.nodes[node.id] = copy.deepcopy(node)
        for pc in self.priority_classes:
            state.priority_classes[pc.name] = copy.deepcopy(pc)
        for level in sorted(set(self.service_levels.values())):
            name = level_class_name(level)
            state.priority_classes[name] = PriorityClass(
                name, level_to_value(level), False, f"priority level {level}"
            )
        for img in self.images:
            state.images[img.id] = copy.deepcopy(img)
        return state


class _Parser:
    def __init__(self, where: str):
        self.where = where
        self.diags: list[Diagnostic] = []
        self.ids: set[str] = set()

    def error(self, code: str, where: str, message: str) -> None:
        self.diags.append(Diagnostic(code, where, message))

    def claim_id(self, object_id: Any, where: str) -> Optional[str]:
        if not isinstance(object_id, str) or not object_id:
            self.error("schema", where, "id must be a non-empty string")
            return None
        if object_id in self.ids:
            self.error("value", where, f"duplicate id {object_id!r}")
            return None
        self.ids.add(object_id)
        return object_id

    def expect_map(self, value: Any, where: str) -> dict:
        if not isinstance(value, dict):
            self.error("schema", where, "expected an object")
            return {}
        return value

    def expect_list(self, value: Any, where: str) -> list:
        if not isinstance(value, list):
            self.error("schema", where, "expected a list")
            return []
        return value

    def str_map(self, value: Any, where: str) -> dict[str, str]:
        mapping = self.expect_map(value, where)
        out = {}
        for key, val in mapping.items():
            if not isinstance(key, str) or not isinstance(val, str):
                self.error("schema", where, f"labels must map strings to strings ({key!r})")
                continue
            out[key] = val
        return out

    def size(self, value: Any, where: str, minimum: int = 0) -> int:
        try:
            parsed = parse_size(value)
        except ValueError as exc:
            self.error("value", where, str(exc))
            return minimum
        if parsed < minimum:
            self.error("value", where, f"must be >= {minimum}, got {parsed}")
            return minimum
        return parsed

    def duration(self, value: Any, where: str) -> int:
        try:
            parsed = parse_duration(value)
        except ValueError as exc:
            self.error("value", where, str(exc))
            return 0
        if parsed < 0:
            self.error("value", where, f"must be >= 0, got {parsed}")
            return 0
        return parsed

    def integer(self, value: Any, where: str, minimum: Optional[int] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.error("schema", where, f"expected an integer, got {value!r}")
            return minimum or 0
        if minimum is not None and value < minimum:
            self.error("value", where, f"must be >= {minimum}, got {value}")
            return minimum
        return value

    def resource_vector(self, value: Any, where: str) -> ResourceVector:
        mapping = self.expect_map(value, where)
        unknown = set(mapping) - {"cpuMillis", "memoryBytes", "diskBytes"}
        for key in sorted(unknown):
            self.error("schema", f"{where}.{key}", "unknown resource dimension")
        return ResourceVector(
            self.integer(mapping.get("cpuMillis", 0), f"{where}.cpuMillis", minimum=0),
            self.size(mapping.get("memoryBytes", 0), f"{where}.memoryBytes"),
            self.size(mapping.get("diskBytes", 0), f"{where}.diskBytes"),
        )

    def check_keys(self, mapping: dict, allowed: set[str], where: str) -> None:
        for key in sorted(set(mapping) - allowed):
            self.error("schema", f"{where}.{key}", "unknown field")


def parse_scenario(doc: Any, where: str = "<scenario>") -> Scenario:
    """Parse and validate a scenario document; raises ScenarioError with the
    full diagnostic list on any problem."""
    parser = _Parser(where)
    scenario = _parse(parser, doc)
    if parser.diags:
        raise ScenarioError(parser.diags)
    return scenario


def _parse(p: _Parser, doc: Any) -> Scenario:
    scenario = Scenario()
    if not isinstance(doc, dict):
        p.error("schema", p.where, "scenario must be a JSON object")
        return scenario
    p.check_keys(
        doc,
        {
            "nodes",
            "priorityClasses",
            "services",
            "images",
            "gcPolicy",
            "ttl",
            "rebalance",
            "engine",
            "events",
        },
        p.where,
    )

    _parse_nodes(p, doc.get("nodes", []), scenario)
    _parse_priority_classes(p, doc.get("priorityClasses", []), scenario)
    _parse_images(p, doc.get("images", []), scenario)
    _parse_services(p, doc.get("services", []), scenario)
    _parse_gc_policy(p, doc.get("gcPolicy", []), scenario)
    _parse_ttl(p, doc.get("ttl", {}), scenario)
    _parse_rebalance(p, doc.get("rebalance", {}), scenario)
    _parse_engine(p, doc.get("engine", {}), scenario)
    _parse_events(p, doc.get("events", []), scenario)
    return scenario


def _parse_nodes(p: _Parser, value: Any, scenario: Scenario) -> None:
    for i, entry in enumerate(p.expect_list(value, "nodes")):
        where = f"nodes[{i}]"
        entry = p.expect_map(entry, where)
        p.check_keys(entry, {"id", "capacity", "labels", "status"}, where)
        node_id = p.claim_id(entry.get("id"), where)
        if node_id is None:
            continue
        capacity = p.resource_vector(entry.get("capacity", {}), f"{where}.capacity")
        labels = p.str_map(entry.get("labels", {}), f"{where}.labels")
        status_raw = entry.get("status", "Up")
        if status_raw not in ("Up", "Down"):
            p.error("value", f"{where}.status", f"expected Up or Down, got {status_raw!r}")
            status_raw = "Up"
        scenario.nodes.append(Node(node_id, capacity, labels, NodeStatus(status_raw)))


def _parse_priority_classes(p: _Parser, value: Any, scenario: Scenario) -> None:
    default_seen = None
    for i, entry in enumerate(p.expect_list(value, "priorityClasses")):
        where = f"priorityClasses[{i}]"
        entry = p.expect_map(entry, where)
        p.check_keys(entry, {"name", "value", "globalDefault", "description"}, where)
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            p.error("schema", f"{where}.name", "name must be a non-empty string")
            continue
        if name.startswith(LEVEL_CLASS_PREFIX):
            p.error("value", f"{where}.name", f"{LEVEL_CLASS_PREFIX}* names are reserved")
            continue
        if any(pc.name == name for pc in scenario.priority_classes):
            p.error("value", f"{where}.name", f"duplicate priority class {name!r}")
            continue
        pc_value = p.integer(entry.get("value"), f"{where}.value")
        if not (MIN_PRIORITY_VALUE <= pc_value <= MAX_PRIORITY_VALUE):
            p.error("value", f"{where}.value", f"{pc_value} outside the 32-bit/1e9 bound")
            pc_value = 0
        global_default = entry.get("globalDefault", False)
        if not isinstance(global_default, bool):
            p.error("schema", f"{where}.globalDefault", "expected a boolean")
            global_default = False
        if global_default:
            if default_seen is not None:
                p.error(
                    "value",
                    f"{where}.globalDefault",
                    f"only one global default allowed (also set on {default_seen!r})",
                )
                global_default = False
            else:
                default_seen = name
        description = entry.get("description", "")
        if not isinstance(description, str):
            p.error("schema", f"{where}.description", "expected a string")
            description = ""
        scenario.priority_classes.append(PriorityClass(name, pc_value, global_default, description))


def _parse_images(p: _Parser, value: Any, scenario: Scenario) -> None:
    for i, entry in enumerate(p.expect_list(value, "images")):
        where = f"images[{i}]"
        entry = p.expect_map(entry, where)
        p.check_keys(entry, {"id", "sizeBytes", "lastUsed", "tags"}, where)
        image_id = p.claim_id(entry.get("id"), where)
        if image_id is None:
            continue
        size = p.size(entry.get("sizeBytes"), f"{where}.sizeBytes", minimum=1)
        last_used = entry.get("lastUsed", 0)
        if isinstance(last_used, bool) or not isinstance(last_used, int):
            p.error("schema", f"{where}.lastUsed", "expected an integer")
            last_used = 0
        tags = p.str_map(entry.get("tags", {}), f"{where}.tags")
        scenario.images.append(ImageRecord(image_id, size, last_used, tags))


def _parse_services(p: _Parser, value: Any, scenario: Scenario) -> None:
    class_names = {pc.name for pc in scenario.priority_classes}
    image_ids = {img.id for img in scenario.images}
    for i, entry in enumerate(p.expect_list(value, "services")):
        where = f"services[{i}]"
        entry = p.expect_map(entry, where)
        p.check_keys(
            entry,
            {
                "id",
                "request",
                "priorityClassName",
                "level",
                "constraints",
                "labels",
                "ownerRefs",
                "finalizers",
                "ttlAfterFinishedSecs",
                "evictionPolicy",
                "kind",
                "image",
                "delegateTo",
            },
            where,
        )
        service_id = p.claim_id(entry.get("id"), where)
        if service_id is None:
            continue
        request = p.resource_vector(entry.get("request", {}), f"{where}.request")
        class_name = entry.get("priorityClassName")
        level = entry.get("level")
        if class_name is not None and level is not None:
            p.error("value", where, "level and priorityClassName are mutually exclusive")
            level = None
        if class_name is not None:
            if class_name not in class_names:
                p.error("reference", f"{where}.priorityClassName", f"unknown priority class {class_name!r}")
        if level is not None:
            level = p.integer(level, f"{where}.level", minimum=1)
            if level > 10:
                p.error("value", f"{where}.level", f"level must be 1..10, got {level}")
                level = 10
            scenario.service_levels[service_id] = level
            class_name = level_class_name(level)
        constraints = p.str_map(entry.get("constraints", {}), f"{where}.constraints")
        labels = p.str_map(entry.get("labels", {}), f"{where}.labels")
        owner_refs = [
            ref
            for ref in p.expect_list(entry.get("ownerRefs", []), f"{where}.ownerRefs")
            if isinstance(ref, str)
        ]
        finalizers = [
            fin
            for fin in p.expect_list(entry.get("finalizers", []), f"{where}.finalizers")
            if isinstance(fin, str)
        ]
        ttl_secs = entry.get("ttlAfterFinishedSecs")
        if ttl_secs is not None:
            ttl_secs = p.duration(ttl_secs, f"{where}.ttlAfterFinishedSecs")
        policy_raw = entry.get("evictionPolicy", "Requeue")
        if policy_raw not in ("Requeue", "Drop", "Delegate"):
            p.error("value", f"{where}.evictionPolicy", f"unknown policy {policy_raw!r}")
            policy_raw = "Requeue"
        kind_raw = entry.get("kind", "service")
        if kind_raw not in ("service", "job"):
            p.error("value", f"{where}.kind", f"expected service or job, got {kind_raw!r}")
            kind_raw = "service"
        image = entry.get("image")
        if image is not None and image not in image_ids:
            p.error("reference", f"{where}.image", f"unknown image {image!r}")
        scenario.service_specs[service_id] = ServiceSpec(
            id=service_id,
            request=request,
            priority_class_name=class_name,
            constraints=constraints,
            labels=labels,
            owner_refs=owner_refs,
            finalizers=finalizers,
            ttl_after_finished_secs=ttl_secs,
            eviction_policy=EvictionPolicy(policy_raw),
            kind=ObjectKind(kind_raw),
            image=image,
            delegate_to=entry.get("delegateTo"),
        )
        scenario.service_order.append(service_id)

    # Cross-service references and static ownership sanity.
    for service_id in scenario.service_order:
        spec = scenario.service_specs[service_id]
        where = f"services[{scenario.service_order.index(service_id)}]"
        for ref in spec.owner_refs:
            if ref == service_id:
                p.error("reference", f"{where}.ownerRefs", "service owns itself")
            elif ref not in scenario.service_specs:
                p.error("reference", f"{where}.ownerRefs", f"unknown owner {ref!r}")
        if spec.delegate_to is not None and spec.delegate_to not in scenario.service_specs:
            p.error("reference", f"{where}.delegateTo", f"unknown service {spec.delegate_to!r}")
    _check_ownership_cycles(p, scenario)


def _check_ownership_cycles(p: _Parser, scenario: Scenario) -> None:
    colors: dict[str, int] = {}

    def visit(sid: str) -> bool:
        colors[sid] = 1
        for ref in scenario.service_specs[sid].owner_refs:
            if ref not in scenario.service_specs:
                continue
            c = colors.get(ref, 0)
            if c == 1 or (c == 0 and visit(ref)):
                return True
        colors[sid] = 2
        return False

    for sid in scenario.service_order:
        if colors.get(sid, 0) == 0 and visit(sid):
            p.error("reference", "services", f"ownership cycle involving {sid!r}")
            return


def _parse_gc_policy(p: _Parser, value: Any, scenario: Scenario) -> None:
    for i, entry in enumerate(p.expect_list(value, "gcPolicy")):
        where = f"gcPolicy[{i}]"
        entry = p.expect_map(entry, where)
        p.check_keys(entry, {"all", "filters", "keepDuration", "keepBytes"}, where)
        match_all = entry.get("all", False)
        if not isinstance(match_all, bool):
            p.error("schema", f"{where}.all", "expected a boolean")
            match_all = False
        filters: list[dict[str, str]] = []
        if "filters" in entry:
            try:
                filters = parse_filters(entry["filters"])
            except ValueError as exc:
                p.error("value", f"{where}.filters", str(exc))
        keep_duration = entry.get("keepDuration")
        if keep_duration is not None:
            keep_duration = p.duration(keep_duration, f"{where}.keepDuration")
        keep_bytes = entry.get("keepBytes")
        if keep_bytes is not None:
            keep_bytes = p.size(keep_bytes, f"{where}.keepBytes")
        if not match_all and keep_duration is None and keep_bytes is None:
            p.error("value", where, "rule constrains nothing (needs all/keepDuration/keepBytes)")
            continue
        scenario.gc_policy.append(GcPolicyRule(match_all, filters, keep_duration, keep_bytes))


def _parse_ttl(p: _Parser, value: Any, scenario: Scenario) -> None:
    mapping = p.expect_map(value, "ttl")
    p.check_keys(
        mapping,
        {"terminatedServiceRetentionSecs", "unusedImageRetentionSecs", "jobRetentionSecs"},
        "ttl",
    )
    ttl = TtlConfig()
    if "terminatedServiceRetentionSecs" in mapping:
        ttl.terminated_service_retention_secs = p.duration(
            mapping["terminatedServiceRetentionSecs"], "ttl.terminatedServiceRetentionSecs"
        )
    if "unusedImageRetentionSecs" in mapping:
        ttl.unused_image_retention_secs = p.duration(
            mapping["unusedImageRetentionSecs"], "ttl.unusedImageRetentionSecs"
        )
    if "jobRetentionSecs" in mapping:
        ttl.job_retention_secs = p.duration(mapping["jobRetentionSecs"], "ttl.jobRetentionSecs")
    scenario.ttl = ttl


def _parse_rebalance(p: _Parser, value: Any, scenario: Scenario) -> None:
    mapping = p.expect_map(value, "rebalance")
    p.check_keys(
        mapping,
        {"threshold", "maxMigrationsPerStep", "strategy", "moves", "windows"},
        "rebalance",
    )
    threshold = mapping.get("threshold", 0.25)
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        p.error("schema", "rebalance.threshold", "expected a number")
        threshold = 0.25
    if not 0.0 <= threshold <= 1.0:
        p.error("value", "rebalance.threshold", f"must be in [0, 1], got {threshold}")
        threshold = 0.25
    k = p.integer(mapping.get("maxMigrationsPerStep", 1), "rebalance.maxMigrationsPerStep", minimum=1)
    strategy = mapping.get("strategy", "Automatic")
    if strategy not in ("Automatic", "Manual"):
        p.error("value", "rebalance.strategy", f"expected Automatic or Manual, got {strategy!r}")
        strategy = "Automatic"
    moves = []
    for i, entry in enumerate(p.expect_list(mapping.get("moves", []), "rebalance.moves")):
        where = f"rebalance.moves[{i}]"
        entry = p.expect_map(entry, where)
        p.check_keys(entry, {"service", "target"}, where)
        service = entry.get("service")
        target = entry.get("target")
        if service not in scenario.service_specs:
            p.error("reference", f"{where}.service", f"unknown service {service!r}")
            continue
        if not any(node.id == target for node in scenario.nodes):
            p.error("reference", f"{where}.target", f"unknown node {target!r}")
            continue
        moves.append((service, target))
    windows = []
    previous_end = None
    raw_windows = p.expect_list(mapping.get("windows", []), "rebalance.windows")
    for i, entry in enumerate(raw_windows):
        where = f"rebalance.windows[{i}]"
        if not (isinstance(entry, list) and len(entry) == 2):
            p.error("schema", where, "expected [start, end]")
            continue
        start = p.integer(entry[0], f"{where}[0]", minimum=0)
        end = p.integer(entry[1], f"{where}[1]", minimum=0)
        if start >= end:
            p.error("value", where, f"window [{start}, {end}) is empty")
            continue
        if previous_end is not None and start < previous_end:
            p.error("value", where, "windows overlap")
            continue
        previous_end = end
        windows.append((start, end))
    try:
        scenario.rebalance = RebalanceConfig(threshold, k, strategy, moves, windows)
    except ValueError as exc:
        p.error("value", "rebalance", str(exc))


def _parse_engine(p: _Parser, value: Any, scenario: Scenario) -> None:
    mapping = p.expect_map(value, "engine")
    p.check_keys(
        mapping,
        {
            "schedulerPeriodSecs",
            "gcSweepPeriodSecs",
            "rebalancePeriodSecs",
            "evictionDelaySecs",
            "seed",
        },
        "engine",
    )
    config = EngineConfig()
    try:
        scenario.engine = replace(
            config,
            scheduler_period_secs=p.integer(
                mapping.get("schedulerPeriodSecs", config.scheduler_period_secs),
                "engine.schedulerPeriodSecs",
                minimum=0,
            ),
            gc_sweep_period_secs=p.integer(
                mapping.get("gcSweepPeriodSecs", config.gc_sweep_period_secs),
                "engine.gcSweepPeriodSecs",
                minimum=1,
            ),
            rebalance_period_secs=p.integer(
                mapping.get("rebalancePeriodSecs", config.rebalance_period_secs),
                "engine.rebalancePeriodSecs",
                minimum=1,
            ),
            eviction_delay_secs=p.integer(
                mapping.get("evictionDelaySecs", config.eviction_delay_secs),
                "engine.evictionDelaySecs",
                minimum=0,
            ),
            seed=p.integer(mapping.get("seed", 0), "engine.seed", minimum=0),
        )
    except ValueError as exc:
        p.error("value", "engine", str(exc))


_EVENT_SCHEMAS: dict[str, tuple[set[str], set[str]]] = {
    # kind -> (required payload keys, optional payload keys)
    "SubmitService": ({"service"}, set()),
    "CompleteService": ({"service"}, {"outcome"}),
    "NodeDown": ({"node"}, set()),
    "NodeUp": ({"node"}, set()),
    "DeleteObject": ({"object"}, {"mode"}),
    "UpdatePriorityClass": ({"name"}, {"value", "globalDefault", "description"}),
    "ManualRebalance": (set(), {"moves"}),
    "ClearFinalizer": ({"object", "finalizer"}, set()),
    "Tick": (set(), set()),
}


def _parse_events(p: _Parser, value: Any, scenario: Scenario) -> None:
    submitted: set[str] = set()
    node_ids = {node.id for node in scenario.nodes}
    image_ids = {img.id for img in scenario.images}
    previous_time = 0
    for i, entry in enumerate(p.expect_list(value, "events")):
        where = f"events[{i}]"
        entry = p.expect_map(entry, where)
        time = p.integer(entry.get("time"), f"{where}.time", minimum=0)
        kind = entry.get("kind")
        if kind not in EVENT_KINDS:
            p.error("value", f"{where}.kind", f"unknown event kind {kind!r}")
            continue
        if time < previous_time:
            p.error("value", f"{where}.time", "events must be sorted by time")
        previous_time = max(previous_time, time)
        required, optional = _EVENT_SCHEMAS[kind]
        payload = {k: v for k, v in entry.items() if k not in ("time", "kind")}
        for key in sorted(required - set(payload)):
            p.error("schema", f"{where}.{key}", f"{kind} requires {key}")
        for key in sorted(set(payload) - required - optional):
            p.error("schema", f"{where}.{key}", f"unknown field for {kind}")

        if kind == "SubmitService":
            sid = payload.get("service")
            if sid not in scenario.service_specs:
                p.error("reference", f"{where}.service", f"unknown service {sid!r}")
            elif sid in submitted:
                p.error("value", f"{where}.service", f"{sid!r} submitted twice")
            else:
                submitted.add(sid)
        elif kind == "CompleteService":
            if payload.get("service") not in scenario.service_specs:
                p.error("reference", f"{where}.service", f"unknown service {payload.get('service')!r}")
            if payload.get("outcome", "Completed") not in ("Completed", "Terminated"):
                p.error("value", f"{where}.outcome", f"bad outcome {payload.get('outcome')!r}")
        elif kind in ("NodeDown", "NodeUp"):
            if payload.get("node") not in node_ids:
                p.error("reference", f"{where}.node", f"unknown node {payload.get('node')!r}")
        elif kind == "DeleteObject":
            oid = payload.get("object")
            if oid not in scenario.service_specs and oid not in image_ids:
                p.error("reference", f"{where}.object", f"unknown object {oid!r}")
            if payload.get("mode", "Background") not in ("Foreground", "Background"):
                p.error("value", f"{where}.mode", f"bad mode {payload.get('mode')!r}")
        elif kind == "UpdatePriorityClass":
            if "value" in payload:
                p.integer(payload["value"], f"{where}.value")
        elif kind == "ManualRebalance":
            for j, move in enumerate(p.expect_list(payload.get("moves", []), f"{where}.moves")):
                mwhere = f"{where}.moves[{j}]"
                move = p.expect_map(move, mwhere)
                if move.get("service") not in scenario.service_specs:
                    p.error("reference", f"{mwhere}.service", f"unknown service {move.get('service')!r}")
                if move.get("target") not in node_ids:
                    p.error("reference", f"{mwhere}.target", f"unknown node {move.get('target')!r}")
        elif kind == "ClearFinalizer":
            oid = payload.get("object")
            if oid not in scenario.service_specs:
                p.error("reference", f"{where}.object", f"unknown object {oid!r}")
            elif payload.get("finalizer") not in scenario.service_specs[oid].finalizers:
                p.error(
                    "reference",
                    f"{where}.finalizer",
                    f"{payload.get('finalizer')!r} not declared on {oid!r}",
                )
        try:
            scenario.events.append(SimEvent(time, kind, payload))
        except ValueError as exc:
            p.error("value", where, str(exc))


def load_scenario(path: str) -> Scenario:
    """Read, parse, and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ScenarioError([Diagnostic("io", path, str(exc))]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([Diagnostic("syntax", f"{path}:{exc.lineno}", exc.msg)]) from exc
    return parse_scenario(doc, where=path)


def validate_file(path: str) -> list[Diagnostic]:
    """Diagnostics for a scenario file; empty when it is valid."""
    try:
        load_scenario(path)
    except ScenarioError as exc:
        return exc.diagnostics
    return []


def scenario_to_dict(scenario: Scenario) -> dict:
    """Canonical dictionary form; `parse -> serialize -> parse` is identity."""
    doc: dict[str, Any] = {}
    doc["nodes"] = [
        {
            "id": node.id,
            "capacity": {
                "cpuMillis": node.capacity.cpu_millis,
                "memoryBytes": node.capacity.memory_bytes,
                "diskBytes": node.capacity.disk_bytes,
            },
            "labels": dict(sorted(node.labels.items())),
            "status": node.status.value,
        }
        for node in scenario.nodes
    ]
    doc["priorityClasses"] = [
        {
            "name": pc.name,
            "value": pc.value,
            "globalDefault": pc.global_default,
            "description": pc.description,
        }
        for pc in scenario.priority_classes
    ]
    doc["services"] = []
    for service_id in scenario.service_order:
        spec = scenario.service_specs[service_id]
        entry: dict[str, Any] = {
            "id": spec.id,
            "request": {
                "cpuMillis": spec.request.cpu_millis,
                "memoryBytes": spec.request.memory_bytes,
                "diskBytes": spec.request.disk_bytes,
            },
        }
        if service_id in scenario.service_levels:
            entry["level"] = scenario.service_levels[service_id]
        elif spec.priority_class_name is not None:
            entry["priorityClassName"] = spec.priority_class_name
        if spec.constraints:
            entry["constraints"] = dict(sorted(spec.constraints.items()))
        if spec.labels:
            entry["labels"] = dict(sorted(spec.labels.items()))
        if spec.owner_refs:
            entry["ownerRefs"] = list(spec.owner_refs)
        if spec.finalizers:
            entry["finalizers"] = list(spec.finalizers)
        if spec.ttl_after_finished_secs is not None:
            entry["ttlAfterFinishedSecs"] = spec.ttl_after_finished_secs
        if spec.eviction_policy is not EvictionPolicy.REQUEUE:
            entry["evictionPolicy"] = spec.eviction_policy.value
        if spec.kind is not ObjectKind.SERVICE:
            entry["kind"] = spec.kind.value
        if spec.image is not None:
            entry["image"] = spec.image
        if spec.delegate_to is not None:
            entry["delegateTo"] = spec.delegate_to
        doc["services"].append(entry)
    doc["images"] = [
        {
            "id": img.id,
            "sizeBytes": img.size_bytes,
            "lastUsed": img.last_used,
            "tags": dict(sorted(img.tags.items())),
        }
        for img in scenario.images
    ]
    doc["gcPolicy"] = [
        {
            "all": rule.match_all,
            **({"filters": rule.filters} if rule.filters else {}),
            **(
                {"keepDuration": rule.keep_duration_secs}
                if rule.keep_duration_secs is not None
                else {}
            ),
            **({"keepBytes": rule.keep_bytes} if rule.keep_bytes is not None else {}),
        }
        for rule in scenario.gc_policy
    ]
    doc["ttl"] = {
        "terminatedServiceRetentionSecs": scenario.ttl.terminated_service_retention_secs,
        "unusedImageRetentionSecs": scenario.ttl.unused_image_retention_secs,
        "jobRetentionSecs": scenario.ttl.job_retention_secs,
    }
    doc["rebalance"] = {
        "threshold": scenario.rebalance.threshold,
        "maxMigrationsPerStep": scenario.rebalance.max_migrations_per_step,
        "strategy": scenario.rebalance.strategy,
        **(
            {"moves": [{"service": s, "target": t} for s, t in scenario.rebalance.manual_moves]}
            if scenario.rebalance.manual_moves
            else {}
        ),
        "windows": [[start, end] for start, end in scenario.rebalance.windows],
    }
    doc["engine"] = {
        "schedulerPeriodSecs": scenario.engine.scheduler_period_secs,
        "gcSweepPeriodSecs": scenario.engine.gc_sweep_period_secs,
        "rebalancePeriodSecs": scenario.engine.rebalance_period_secs,
        "evictionDelaySecs": scenario.engine.eviction_delay_secs,
        "seed": scenario.engine.seed,
    }
    doc["events"] = [
        {"time": event.time, "kind": event.kind, **event.payload} for event in scenario.events
    ]
    return doc


def serialize_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"
