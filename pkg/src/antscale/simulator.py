"""Discrete-interval environment for exercising autoscaling deciders.

Each step covers one 120 s interval: pending horizontal actions land first,
a decision (if any) is applied as instantaneous vertical scaling, the trace
advances, demand proxies produce utilizations, objective observations are
sampled with noise, primitive bounds adapt toward recent behavior, and
horizontal triggers are evaluated for the next interval.
"""

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    ControlPrimitiveSpec,
    Decision,
    Region,
    Scenario,
    ServiceInstance,
    Topology,
    VirtualMachine,
)
from .qosmodel import DemandModel, ModelParams, RegionModel

TRIGGER_SLA = "sla-violation"
TRIGGER_LOW_UTIL = "low-utilization"


class TraceExhausted(Exception):
    """Signals that the workload trace has no further intervals."""


@dataclass
class EnvironmentState:
    """Snapshot of the environment at one interval."""

    interval_index: int
    workloads: dict = field(default_factory=dict)             # instance id -> req/min
    current_configuration: dict = field(default_factory=dict)  # primitive id -> value
    utilizations: dict = field(default_factory=dict)           # primitive id -> [0, 1]


@dataclass
class IntervalResult:
    env: EnvironmentState
    observed: dict = field(default_factory=dict)   # objective id -> measured value
    demands: dict = field(default_factory=dict)    # primitive id -> requirement proxy
    events: list = field(default_factory=list)


@dataclass
class RegionRuntime:
    """Everything a decider needs about one region at decision time."""

    region: Region
    model: RegionModel
    env: EnvironmentState
    grids: list                  # per primitive, ndarray of selectable values
    current: np.ndarray          # live configuration as a region-ordered row
    specs: list                  # ControlPrimitiveSpec per region primitive


def detect_trigger(env: EnvironmentState, region: Region, observed: dict,
                   objectives: dict, prim_specs: dict):
    """Classify the interval: SLA breach beats low utilization beats nothing."""
    for oid in region.objective_ids:
        obj = objectives[oid]
        if oid in observed and obj.violated(observed[oid]):
            return TRIGGER_SLA
    for pid in region.primitive_ids:
        util = env.utilizations.get(pid)
        if util is not None and util < prim_specs[pid].util_trigger:
            return TRIGGER_LOW_UTIL
    return None


def adapt_bounds(spec: ControlPrimitiveSpec, decided: int, observed: float) -> ControlPrimitiveSpec:
    """Move a primitive's selectable range toward recent behavior.

    ``observed`` is the raw requirement estimate, not yet snapped. The upper
    bound stretches by the configured fraction when both the decided value and
    the observation press against it (at or above threshold * upper) and
    shrinks by the same fraction when both sit clearly below; either way it is
    re-snapped to the grid phase and clamped to the physical maximum. The
    lower bound follows the latest observation, never below the configured
    floor and never above the upper bound, so it relaxes again once demand
    recedes.
    """
    t = spec.adapt_threshold
    k = spec.adapt_fraction
    upper = spec.upper_bound
    gate = t * upper
    if decided >= gate and observed >= gate:
        stretched = upper * (1.0 + k)
    elif decided < gate and observed < gate:
        stretched = upper * (1.0 - k)
    else:
        stretched = float(upper)

    def snap(x: float) -> int:
        ticks = int(np.floor((x - spec.base_lower) / spec.step + 0.5))
        return spec.base_lower + ticks * spec.step

    # a shrink never undercuts the lower bound as it was when this ran
    new_upper = int(min(max(snap(stretched), spec.lower_bound), spec.hard_max))
    # the hard clamp may land between grid points; settle on the phase below
    new_upper -= (new_upper - spec.base_lower) % spec.step
    new_lower = int(min(max(spec.base_lower, snap(observed)), new_upper))
    return spec.with_bounds(new_lower, new_upper)


class Simulator:
    """Replays a workload trace against the synthetic environment."""

    def __init__(self, scenario: Scenario, trace: dict, seed: int = 0):
        self.scenario = scenario
        lengths = {len(v) for v in trace.values()}
        if len(lengths) != 1:
            raise ValueError("trace series must share one length")
        self.horizon = lengths.pop()
        for svc in scenario.topology.services:
            if svc.managed and svc.id not in trace:
                raise ValueError(f"trace has no series for managed service {svc.id}")
        self.trace = trace
        self.topology = scenario.topology
        self.prim_specs = dict(scenario.primitives)
        self.config = scenario.initial_configuration()
        self.params = ModelParams.from_dict(scenario.model_params)
        self.demand_model = DemandModel(self.params)
        self.rng = np.random.default_rng(seed)
        self.interval = -1
        self.last_decided = None
        # instance groups sharing one trace series: root service id -> instance ids
        self.groups = {svc.id: [svc.id] for svc in scenario.topology.services}
        self._pending = []          # horizontal ops queued for the next step
        self._fired = set()         # (pm id, resource) pairs awaiting re-arm
        self._replica_seq = itertools.count(1)
        self._models = {}

    # -- deciders' view ----------------------------------------------------

    def effective_region(self, region_id: str) -> Region:
        """The region as deciders must see it right now.

        Scale-out registers clone primitives at runtime.  They feed the same
        objectives as their roots, so the region's decision space grows to
        include them; scale-in shrinks it back.  Static members keep their
        declared order, clones follow sorted by id.
        """
        region = self.scenario.region_by_id(region_id)
        owners = {self.prim_specs[pid].owner for pid in region.primitive_ids}
        extras = sorted(
            pid
            for pid, spec in self.prim_specs.items()
            if "~r" in spec.owner and self._root_of(spec.owner) in owners
        )
        if not extras:
            return region
        return dataclasses.replace(
            region, primitive_ids=region.primitive_ids + tuple(extras)
        )

    def region_model(self, region_id: str) -> RegionModel:
        if region_id not in self._models:
            self._models[region_id] = RegionModel(
                self.scenario,
                self.effective_region(region_id),
                self.topology,
                self.prim_specs,
            )
        return self._models[region_id]

    def region_runtime(self, region_id: str, env: EnvironmentState) -> RegionRuntime:
        region = self.effective_region(region_id)
        specs = [self.prim_specs[pid] for pid in region.primitive_ids]
        grids = [np.array(s.grid(), dtype=float) for s in specs]
        current = np.array([float(self.config[pid]) for pid in region.primitive_ids])
        return RegionRuntime(region, self.region_model(region_id), env, grids, current, specs)

    # -- stepping ----------------------------------------------------------

    def step(self, decision: Decision | None = None) -> IntervalResult:
        """Advance one interval, applying ``decision`` as vertical scaling."""
        if self.interval + 1 >= self.horizon:
            raise TraceExhausted(f"trace ends after {self.horizon} intervals")
        events = []
        self._apply_pending(events)
        decided = {}
        if decision is not None:
            for pid, value in decision.assignments.items():
                if pid not in self.config:
                    # a clone can be reclaimed between decision and apply
                    if "~r" in pid:
                        continue
                    raise KeyError(f"decision touches unknown primitive {pid}")
                self.config[pid] = int(value)
                decided[pid] = int(value)
        self.last_decided = decided or None

        self.interval += 1
        workloads = self._split_workloads(self.interval)

        demands = {}
        utilizations = {}
        for pid, spec in self.prim_specs.items():
            d = self.demand_model.demand(spec, self.topology, workloads)
            if d is None:
                continue
            demands[pid] = d
            provision = float(self.config[pid])
            utilizations[pid] = 1.0 if provision <= 0 else min(1.0, d / provision)

        env = EnvironmentState(
            interval_index=self.interval,
            workloads=workloads,
            current_configuration=dict(self.config),
            utilizations=utilizations,
        )

        observed = {}
        for region in self.scenario.regions:
            model = self.region_model(region.id)
            live = Decision({pid: self.config[pid] for pid in model.region_pids})
            values = model.observe_vector(live, env, self.rng)
            for oid, value in zip(model.objective_ids, values):
                observed[oid] = float(value)

        if decided:
            for pid, value in decided.items():
                spec = self.prim_specs[pid]
                if pid in demands:
                    self.prim_specs[pid] = adapt_bounds(spec, int(value), demands[pid])

        self._evaluate_horizontal(env, events)
        return IntervalResult(env=env, observed=observed, demands=demands, events=events)

    # -- internals ---------------------------------------------------------

    def _split_workloads(self, interval: int) -> dict:
        workloads = {}
        for root, members in self.groups.items():
            series = self.trace.get(root)
            if series is None:
                continue
            share = float(series[interval]) / len(members)
            for member in members:
                workloads[member] = share
        return workloads

    def _vm_prims(self, vm_id: str) -> list:
        return [
            pid for pid, s in self.prim_specs.items()
            if s.scope == "per-vm-shared" and s.owner == vm_id
        ]

    def _service_prims(self, service_id: str) -> list:
        return [
            pid for pid, s in self.prim_specs.items()
            if s.scope == "per-service" and s.owner == service_id
        ]

    def _evaluate_horizontal(self, env: EnvironmentState, events: list) -> None:
        # scale-out: summed upper bounds crossing PM capacity, edge-triggered
        for pm in self.topology.pms:
            for resource, capacity in pm.capacity.items():
                total_upper = sum(
                    self.prim_specs[pid].upper_bound
                    for vm in self.topology.vms_on_pm(pm.id)
                    for pid in self._vm_prims(vm.id)
                    if self.prim_specs[pid].resource == resource
                )
                key = (pm.id, resource)
                if total_upper > capacity:
                    if key not in self._fired:
                        self._fired.add(key)
                        self._queue_scale_out(pm.id, resource, events)
                else:
                    self._fired.discard(key)

        # scale-in: a replica VM idling at its minimums is reclaimed next interval
        for vm in self.topology.vms:
            if "~r" not in vm.id:
                continue
            pids = self._vm_prims(vm.id) + [
                pid for svc in self.topology.services_on_vm(vm.id)
                for pid in self._service_prims(svc.id)
            ]
            at_min = all(self.config[pid] <= self.prim_specs[pid].lower_bound for pid in pids)
            idle = all(
                env.utilizations.get(pid) is not None
                and env.utilizations[pid] < self.prim_specs[pid].util_trigger
                for pid in pids
            )
            if at_min and idle and pids:
                self._pending.append(("scale-in", vm.id))
                events.append(("scale-in-queued", vm.id))

    def _queue_scale_out(self, pm_id: str, resource: str, events: list) -> None:
        vms = self.topology.vms_on_pm(pm_id)
        def pressure(vm):
            return sum(
                self.prim_specs[pid].upper_bound
                for pid in self._vm_prims(vm.id)
                if self.prim_specs[pid].resource == resource
            )
        source = max(vms, key=pressure)
        target = self._placement_target(source)
        if target is None:
            events.append(("scale-out-skipped", pm_id, resource))
            return
        self._pending.append(("scale-out", source.id, target))
        events.append(("scale-out-queued", source.id, target))

    def _placement_target(self, source: VirtualMachine):
        """PM with the most headroom that can take a fresh clone of ``source``."""
        need = {}
        for pid in self._vm_prims(source.id):
            base = self.scenario.primitives.get(pid, self.prim_specs[pid])
            need[base.resource] = need.get(base.resource, 0) + base.upper_bound
        best, best_room = None, None
        for pm in self.topology.pms:
            if pm.id == source.pm:
                continue
            rooms = []
            ok = True
            for resource, amount in need.items():
                used = sum(
                    self.prim_specs[pid].upper_bound
                    for vm in self.topology.vms_on_pm(pm.id)
                    for pid in self._vm_prims(vm.id)
                    if self.prim_specs[pid].resource == resource
                )
                capacity = pm.capacity.get(resource, 0.0)
                if used + amount > capacity:
                    ok = False
                    break
                rooms.append(capacity - used)
            if ok:
                room = min(rooms) if rooms else 0.0
                if best_room is None or room > best_room:
                    best, best_room = pm.id, room
        return best

    def _apply_pending(self, events: list) -> None:
        ops, self._pending = self._pending, []
        changed = False
        for op in ops:
            if op[0] == "scale-out":
                _, source_id, target_pm = op
                self._clone_vm(source_id, target_pm, events)
                changed = True
            elif op[0] == "scale-in":
                self._remove_vm(op[1], events)
                changed = True
        if changed:
            self._models = {}

    def _root_of(self, service_id: str) -> str:
        return service_id.split("~r")[0]

    def _clone_vm(self, source_id: str, target_pm: str, events: list) -> None:
        n = next(self._replica_seq)
        source = self.topology.vm_by_id(source_id)
        new_vm = VirtualMachine(id=f"{source_id}~r{n}", pm=target_pm)
        new_services = []
        new_specs = {}
        for pid in self._vm_prims(source_id):
            template = self.scenario.primitives.get(pid, self.prim_specs[pid])
            clone = dataclasses.replace(template, id=f"{new_vm.id}.{template.resource}", owner=new_vm.id)
            new_specs[clone.id] = clone
        for svc in self.topology.services_on_vm(source_id):
            replica = ServiceInstance(id=f"{svc.id}~r{n}", vm=new_vm.id, managed=False)
            new_services.append(replica)
            for pid in self._service_prims(svc.id):
                template = self.scenario.primitives.get(pid, self.prim_specs[pid])
                clone = dataclasses.replace(
                    template, id=f"{replica.id}.{template.resource}", owner=replica.id
                )
                new_specs[clone.id] = clone
            self.groups[self._root_of(svc.id)].append(replica.id)
        self.topology = Topology(
            pms=self.topology.pms,
            vms=self.topology.vms + (new_vm,),
            services=self.topology.services + tuple(new_services),
        )
        for pid, spec in new_specs.items():
            self.prim_specs[pid] = spec
            self.config[pid] = spec.initial
        events.append(("scale-out", source_id, new_vm.id, target_pm))

    def _remove_vm(self, vm_id: str, events: list) -> None:
        try:
            self.topology.vm_by_id(vm_id)
        except KeyError:
            return
        doomed_services = [svc.id for svc in self.topology.services_on_vm(vm_id)]
        doomed_prims = set(self._vm_prims(vm_id))
        for sid in doomed_services:
            doomed_prims.update(self._service_prims(sid))
            root = self._root_of(sid)
            if root in self.groups and sid in self.groups[root]:
                self.groups[root].remove(sid)
        self.topology = Topology(
            pms=self.topology.pms,
            vms=tuple(vm for vm in self.topology.vms if vm.id != vm_id),
            services=tuple(svc for svc in self.topology.services if svc.vm != vm_id),
        )
        for pid in doomed_prims:
            self.prim_specs.pop(pid, None)
            self.config.pop(pid, None)
        events.append(("scale-in", vm_id))
