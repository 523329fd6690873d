"""Core vocabulary for autoscaling decisions.

Control primitives are the knobs (CPU cap, memory, service threads), objectives
are the per-service quality and cost targets, and a region groups the
objectives that must be decided together with the primitives that drive them.
All grid values are integers in the primitive's smallest unit so that
equality, hashing and CSV round-trips stay exact.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field

MINIMIZE = "minimize"
MAXIMIZE = "maximize"
DIRECTIONS = (MINIMIZE, MAXIMIZE)

SCOPE_SERVICE = "per-service"
SCOPE_VM = "per-vm-shared"
SCOPES = (SCOPE_SERVICE, SCOPE_VM)

KIND_RESPONSE_TIME = "response_time"
KIND_THROUGHPUT = "throughput"
KIND_RELIABILITY = "reliability"
KIND_AVAILABILITY = "availability"
KIND_COST = "cost"
KIND_CUSTOM = "custom"

# default optimization direction per objective kind
KIND_DIRECTIONS = {
    KIND_RESPONSE_TIME: MINIMIZE,
    KIND_THROUGHPUT: MAXIMIZE,
    KIND_RELIABILITY: MAXIMIZE,
    KIND_AVAILABILITY: MAXIMIZE,
    KIND_COST: MINIMIZE,
}

MODEL_QUEUE = "interference-queue"
MODEL_PRICE_SUM = "price-sum"
KNOWN_MODELS = (MODEL_QUEUE, MODEL_PRICE_SUM)


class ConfigError(Exception):
    """Raised when a scenario document cannot be used as configured."""


@dataclass(frozen=True)
class ControlPrimitiveSpec:
    """One scaling knob with its value grid and runtime-adaptive bounds.

    ``lower_bound``/``upper_bound`` move at runtime (functional updates via
    :func:`dataclasses.replace`); ``base_lower`` keeps the configured floor and
    anchors the grid phase, ``hard_min``/``hard_max`` are physical limits.
    """

    id: str
    scope: str
    owner: str            # service id or VM id, depending on scope
    resource: str         # capacity type label: "cpu", "memory", "thread", ...
    unit: str
    initial: int
    step: int
    base_lower: int
    lower_bound: int
    upper_bound: int
    hard_min: int
    hard_max: int
    price: float
    util_trigger: float   # utilization below this marks the primitive idle
    adapt_threshold: float
    adapt_fraction: float

    def grid(self) -> list[int]:
        """All selectable values from lower to upper bound, inclusive."""
        return list(range(self.lower_bound, self.upper_bound + 1, self.step))

    def on_grid(self, value) -> bool:
        if value != int(value):
            return False
        value = int(value)
        if value < self.lower_bound or value > self.upper_bound:
            return False
        return (value - self.base_lower) % self.step == 0

    def snap(self, value: float) -> int:
        """Nearest grid value to an arbitrary observation, clamped to bounds."""
        ticks = math.floor((value - self.base_lower) / self.step + 0.5)
        snapped = self.base_lower + ticks * self.step
        lo, hi = self.lower_bound, self.upper_bound
        return int(min(max(snapped, lo), hi))

    def with_bounds(self, lower: int, upper: int) -> "ControlPrimitiveSpec":
        return dataclasses.replace(self, lower_bound=int(lower), upper_bound=int(upper))


@dataclass(frozen=True)
class EnvironmentalPrimitive:
    """An observed, uncontrollable input series such as workload per interval."""

    id: str
    owner: str
    values: tuple = ()

    def latest(self) -> float:
        if not self.values:
            raise ValueError(f"environmental primitive {self.id} has no samples")
        return self.values[-1]


@dataclass(frozen=True)
class Decision:
    """A complete assignment of grid values to a region's primitives."""

    assignments: dict = field(default_factory=dict)

    def key(self) -> tuple:
        """Canonical identity used for deduplication."""
        return tuple(sorted(self.assignments.items()))

    def value(self, primitive_id: str) -> int:
        return self.assignments[primitive_id]


@dataclass(frozen=True)
class ObjectiveSpec:
    """A single optimization target tied to one managed service."""

    id: str
    kind: str
    direction: str
    owner: str
    threshold: float      # SLA level or budget, in the objective's unit
    model: str

    def is_better(self, a: float, b: float) -> bool:
        """True when value ``a`` is strictly better than ``b``. Equal is not better."""
        if self.direction == MINIMIZE:
            return a < b
        return a > b

    def violated(self, value: float) -> bool:
        """Direction-aware requirement check; meeting the threshold exactly passes."""
        if self.direction == MINIMIZE:
            return value > self.threshold
        return value < self.threshold


@dataclass(frozen=True)
class PhysicalMachine:
    id: str
    capacity: dict = field(default_factory=dict)   # resource label -> amount


@dataclass(frozen=True)
class VirtualMachine:
    id: str
    pm: str


@dataclass(frozen=True)
class ServiceInstance:
    id: str
    vm: str
    managed: bool = True


@dataclass(frozen=True)
class Topology:
    """Static deployment layout: PMs hosting VMs hosting service instances."""

    pms: tuple = ()
    vms: tuple = ()
    services: tuple = ()

    def pm_by_id(self, pm_id: str) -> PhysicalMachine:
        for pm in self.pms:
            if pm.id == pm_id:
                return pm
        raise KeyError(pm_id)

    def vm_by_id(self, vm_id: str) -> VirtualMachine:
        for vm in self.vms:
            if vm.id == vm_id:
                return vm
        raise KeyError(vm_id)

    def service_by_id(self, service_id: str) -> ServiceInstance:
        for svc in self.services:
            if svc.id == service_id:
                return svc
        raise KeyError(service_id)

    def vms_on_pm(self, pm_id: str) -> list[VirtualMachine]:
        return [vm for vm in self.vms if vm.pm == pm_id]

    def services_on_vm(self, vm_id: str) -> list[ServiceInstance]:
        return [svc for svc in self.services if svc.vm == vm_id]


@dataclass(frozen=True)
class Region:
    """Objectives that must be traded off together plus the primitives they read."""

    id: str
    objective_ids: tuple = ()
    primitive_ids: tuple = ()


@dataclass
class Scenario:
    """Everything needed to run one experiment: layout, knobs, targets, tuning."""

    name: str
    topology: Topology
    primitives: dict          # primitive id -> ControlPrimitiveSpec
    objectives: dict          # objective id -> ObjectiveSpec
    regions: list
    model_params: dict = field(default_factory=dict)
    algorithm_params: dict = field(default_factory=dict)
    trace_params: dict = field(default_factory=dict)

    def primitives_for_service(self, service_id: str) -> list[str]:
        """Ids of the primitives that serve one service: its own plus its VM's."""
        svc = self.topology.service_by_id(service_id)
        out = []
        for pid, spec in self.primitives.items():
            if spec.scope == SCOPE_SERVICE and spec.owner == service_id:
                out.append(pid)
            elif spec.scope == SCOPE_VM and spec.owner == svc.vm:
                out.append(pid)
        return out

    def region_by_id(self, region_id: str) -> Region:
        for region in self.regions:
            if region.id == region_id:
                return region
        raise KeyError(region_id)

    def initial_configuration(self) -> dict:
        return {pid: spec.initial for pid, spec in self.primitives.items()}


def _primitive_from_dict(entry: dict) -> ControlPrimitiveSpec:
    lower = int(entry["min"])
    upper = int(entry["max"])
    return ControlPrimitiveSpec(
        id=entry["id"],
        scope=entry["scope"],
        owner=entry["owner"],
        resource=entry["resource"],
        unit=entry.get("unit", ""),
        initial=int(entry["initial"]),
        step=int(entry["step"]),
        base_lower=lower,
        lower_bound=lower,
        upper_bound=upper,
        hard_min=int(entry.get("hard_min", lower)),
        hard_max=int(entry.get("hard_max", upper)),
        price=float(entry.get("price", 0.0)),
        util_trigger=float(entry.get("util_trigger", 0.5)),
        adapt_threshold=float(entry.get("adapt_threshold", 0.7)),
        adapt_fraction=float(entry.get("adapt_fraction", 0.1)),
    )


def _objective_from_dict(entry: dict) -> ObjectiveSpec:
    kind = entry["kind"]
    direction = entry.get("direction") or KIND_DIRECTIONS.get(kind)
    if direction is None:
        raise ConfigError(f"objective {entry.get('id')}: custom kind needs an explicit direction")
    default_model = MODEL_PRICE_SUM if kind == KIND_COST else MODEL_QUEUE
    return ObjectiveSpec(
        id=entry["id"],
        kind=kind,
        direction=direction,
        owner=entry["owner"],
        threshold=float(entry["threshold"]),
        model=entry.get("model", default_model),
    )


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a Scenario from a parsed JSON document. Structural errors raise ConfigError."""
    try:
        topo_doc = doc["topology"]
        topology = Topology(
            pms=tuple(PhysicalMachine(p["id"], dict(p.get("capacity", {}))) for p in topo_doc["pms"]),
            vms=tuple(VirtualMachine(v["id"], v["pm"]) for v in topo_doc["vms"]),
            services=tuple(
                ServiceInstance(s["id"], s["vm"], bool(s.get("managed", True)))
                for s in topo_doc["services"]
            ),
        )
        primitives = {}
        for entry in doc["primitives"]:
            primitives[entry["id"]] = _primitive_from_dict(entry)
        objectives = {}
        for entry in doc["objectives"]:
            objectives[entry["id"]] = _objective_from_dict(entry)
        regions = [
            Region(r["id"], tuple(r["objectives"]), tuple(r["primitives"]))
            for r in doc["regions"]
        ]
    except KeyError as missing:
        raise ConfigError(f"scenario document is missing key {missing}") from missing
    return Scenario(
        name=doc.get("name", "scenario"),
        topology=topology,
        primitives=primitives,
        objectives=objectives,
        regions=regions,
        model_params=dict(doc.get("model", {})),
        algorithm_params=dict(doc.get("algorithms", {})),
        trace_params=dict(doc.get("trace", {})),
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def validate_scenario(scenario: Scenario) -> list[str]:
    """Check referential and numeric consistency.

    Returns a list of human-readable violations, each prefixed with the path of
    the offending element. An empty list means the scenario is usable.
    """
    problems = []
    topo = scenario.topology

    pm_ids = [pm.id for pm in topo.pms]
    vm_ids = [vm.id for vm in topo.vms]
    svc_ids = [svc.id for svc in topo.services]
    for label, ids in (("pms", pm_ids), ("vms", vm_ids), ("services", svc_ids)):
        seen = set()
        for i, id_ in enumerate(ids):
            if id_ in seen:
                problems.append(f"topology.{label}[{i}]: duplicate id {id_!r}")
            seen.add(id_)
    for i, vm in enumerate(topo.vms):
        if vm.pm not in pm_ids:
            problems.append(f"topology.vms[{i}]: unknown pm {vm.pm!r}")
    for i, svc in enumerate(topo.services):
        if svc.vm not in vm_ids:
            problems.append(f"topology.services[{i}]: unknown vm {svc.vm!r}")

    for pid, spec in scenario.primitives.items():
        where = f"primitives[{pid}]"
        if spec.scope not in SCOPES:
            problems.append(f"{where}.scope: {spec.scope!r} not one of {SCOPES}")
        elif spec.scope == SCOPE_SERVICE and spec.owner not in svc_ids:
            problems.append(f"{where}.owner: unknown service {spec.owner!r}")
        elif spec.scope == SCOPE_VM and spec.owner not in vm_ids:
            problems.append(f"{where}.owner: unknown vm {spec.owner!r}")
        if spec.step < 1:
            problems.append(f"{where}.step: must be a positive integer, got {spec.step}")
            continue
        if not spec.hard_min <= spec.lower_bound <= spec.upper_bound <= spec.hard_max:
            problems.append(
                f"{where}: bounds must satisfy hard_min <= lower <= upper <= hard_max, "
                f"got {spec.hard_min} <= {spec.lower_bound} <= {spec.upper_bound} <= {spec.hard_max}"
            )
        if (spec.upper_bound - spec.lower_bound) % spec.step != 0:
            problems.append(f"{where}: upper bound {spec.upper_bound} is off the value grid")
        if not spec.on_grid(spec.initial):
            problems.append(f"{where}.initial: {spec.initial} is off the value grid")
        if spec.price < 0:
            problems.append(f"{where}.price: must be non-negative, got {spec.price}")
        if not 0 < spec.util_trigger < 1:
            problems.append(f"{where}.util_trigger: must lie in (0, 1), got {spec.util_trigger}")
        if not 0 < spec.adapt_threshold <= 1:
            problems.append(f"{where}.adapt_threshold: must lie in (0, 1], got {spec.adapt_threshold}")
        if not 0 < spec.adapt_fraction < 1:
            problems.append(f"{where}.adapt_fraction: must lie in (0, 1), got {spec.adapt_fraction}")
        if spec.scope == SCOPE_VM and spec.owner in vm_ids:
            pm = topo.pm_by_id(topo.vm_by_id(spec.owner).pm)
            if spec.resource not in pm.capacity:
                problems.append(
                    f"{where}.resource: {spec.resource!r} has no capacity entry on {pm.id}"
                )

    for oid, obj in scenario.objectives.items():
        where = f"objectives[{oid}]"
        if obj.kind not in KIND_DIRECTIONS and obj.kind != KIND_CUSTOM:
            problems.append(f"{where}.kind: unknown kind {obj.kind!r}")
        if obj.direction not in DIRECTIONS:
            problems.append(f"{where}.direction: {obj.direction!r} not one of {DIRECTIONS}")
        if obj.kind == KIND_COST and obj.direction != MINIMIZE:
            problems.append(f"{where}.direction: cost objectives must minimize")
        if obj.owner not in svc_ids:
            problems.append(f"{where}.owner: unknown service {obj.owner!r}")
        if not math.isfinite(obj.threshold) or obj.threshold <= 0:
            problems.append(f"{where}.threshold: must be finite and positive, got {obj.threshold}")
        if obj.model not in KNOWN_MODELS:
            problems.append(f"{where}.model: unknown model {obj.model!r}")

    seen_objs, seen_prims = set(), set()
    for region in scenario.regions:
        where = f"regions[{region.id}]"
        for oid in region.objective_ids:
            if oid not in scenario.objectives:
                problems.append(f"{where}: unknown objective {oid!r}")
            elif oid in seen_objs:
                problems.append(f"{where}: objective {oid!r} appears in more than one region")
            seen_objs.add(oid)
        for pid in region.primitive_ids:
            if pid not in scenario.primitives:
                problems.append(f"{where}: unknown primitive {pid!r}")
            elif pid in seen_prims:
                problems.append(f"{where}: primitive {pid!r} appears in more than one region")
            seen_prims.add(pid)
        # each objective's model inputs must all be decidable inside its region
        prim_set = set(region.primitive_ids)
        for oid in region.objective_ids:
            obj = scenario.objectives.get(oid)
            if obj is None or obj.owner not in svc_ids:
                continue
            for pid in scenario.primitives_for_service(obj.owner):
                if pid not in prim_set:
                    problems.append(
                        f"{where}: objective {oid!r} reads primitive {pid!r} outside the region"
                    )
    return problems


def validate_decision(scenario: Scenario, region: Region, decision: Decision) -> list[str]:
    """Grid membership and coverage check for one candidate decision."""
    problems = []
    expected = set(region.primitive_ids)
    got = set(decision.assignments)
    for pid in sorted(expected - got):
        problems.append(f"decision: missing assignment for {pid!r}")
    for pid in sorted(got - expected):
        problems.append(f"decision: {pid!r} is not part of region {region.id!r}")
    for pid in sorted(expected & got):
        value = decision.assignments[pid]
        if not scenario.primitives[pid].on_grid(value):
            problems.append(f"decision[{pid}]: value {value} is off the grid")
    return problems
