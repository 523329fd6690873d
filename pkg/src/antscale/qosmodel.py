"""Synthetic QoS models mapping configurations to per-service outcomes.

The queueing-with-interference model captures the two coupling channels that
make autoscaling a trade-off problem: co-hosted VMs contend for physical CPU
once their combined use crosses a contention limit, and co-located services
on one VM degrade each other when their combined thread count outgrows what
the VM's memory can back. Predictions are deterministic; observation noise is
applied only when sampling what the environment "measured".

Evaluation is batched: candidate decisions are rows of an integer matrix and
all of a region's objectives are produced in one numpy pass, which is what
keeps thousands of constructions per decision affordable.
"""

from dataclasses import dataclass

import numpy as np

from .domain import (
    KIND_AVAILABILITY,
    KIND_COST,
    KIND_RELIABILITY,
    KIND_RESPONSE_TIME,
    KIND_THROUGHPUT,
    MINIMIZE,
    MODEL_PRICE_SUM,
    MODEL_QUEUE,
    ConfigError,
    Decision,
    Region,
    Scenario,
    Topology,
)

RES_CPU = "cpu"
RES_MEMORY = "memory"
RES_THREAD = "thread"


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the synthetic environment, all overridable per scenario."""

    cpu_rate: float = 6.0             # req/min served per effective CPU% share
    thread_rate: float = 14.0         # req/min served per service thread
    overload_penalty: float = 10.0    # req/min lost per thread beyond saturation
    thread_sat_per_mb: float = 0.04   # threads a VM's memory can back, per MB
    cpu_contention_limit: float = 95.0  # per-PM CPU use before contention bites
    rt_base_ms: float = 0.5           # service time at an idle queue
    rel_slope: float = 2.0            # steepness of the reliability response, per ms
    avail_slope: float = 2.0
    avail_rt_ref_ms: float = 4.0      # response level counted against availability
    rel_rt_ref_ms: float = 2.0        # fallback when the owner has no RT target
    min_capacity: float = 1.0
    noise_std: float = 0.05
    cpu_demand_per_req: float = 0.12  # demand proxies, per req/min of workload
    mem_demand_base: float = 180.0
    mem_demand_per_req: float = 0.15
    thread_demand_per_req: float = 0.03

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"model: unknown parameters {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _root_service(service_id: str) -> str:
    # replica instances carry a "~r<n>" suffix; objectives belong to the root
    return service_id.split("~r")[0]


class RegionModel:
    """Batched evaluator for one region's objectives against a topology snapshot.

    Rebuild whenever the topology changes (replica VMs appear or retire); the
    construction cost is a few small loops, so rebuilding per decision call is
    also fine.
    """

    def __init__(self, scenario: Scenario, region: Region, topology: Topology,
                 prim_specs: dict):
        self.params = ModelParams.from_dict(scenario.model_params)
        self.region = region
        self.topology = topology
        self.objective_ids = list(region.objective_ids)
        self.objectives = [scenario.objectives[oid] for oid in self.objective_ids]
        self.thresholds = np.array([o.threshold for o in self.objectives])
        # +1 means larger is better; used wherever direction-aware compares vectorize
        self.direction_signs = np.array(
            [-1.0 if o.direction == MINIMIZE else 1.0 for o in self.objectives]
        )

        self.all_pids = list(prim_specs)
        self._all_index = {pid: i for i, pid in enumerate(self.all_pids)}
        self.region_pids = list(region.primitive_ids)
        self._region_cols = np.array([self._all_index[pid] for pid in self.region_pids])

        vms = list(topology.vms)
        self._vm_ids = [vm.id for vm in vms]
        vm_index = {vm.id: i for i, vm in enumerate(vms)}
        pm_ids = [pm.id for pm in topology.pms]
        pm_index = {pid: i for i, pid in enumerate(pm_ids)}
        self._pm_of_vm = np.array([pm_index[vm.pm] for vm in vms])

        cpu_idx, mem_idx = {}, {}
        thr_idx = {}
        for pid, spec in prim_specs.items():
            if spec.scope == "per-vm-shared" and spec.resource == RES_CPU:
                cpu_idx[spec.owner] = self._all_index[pid]
            elif spec.scope == "per-vm-shared" and spec.resource == RES_MEMORY:
                mem_idx[spec.owner] = self._all_index[pid]
            elif spec.scope == "per-service" and spec.resource == RES_THREAD:
                thr_idx[spec.owner] = self._all_index[pid]

        services = list(topology.services)
        self._service_ids = [svc.id for svc in services]
        svc_index = {svc.id: i for i, svc in enumerate(services)}
        needs_queue = {o.owner for o in self.objectives if o.model == MODEL_QUEUE}
        for svc in services:
            if svc.id in needs_queue:
                vm = svc.vm
                if vm not in cpu_idx or vm not in mem_idx or svc.id not in thr_idx:
                    raise ConfigError(
                        f"service {svc.id}: queue model needs a VM cpu, VM memory "
                        f"and service thread primitive"
                    )
        self._vm_of_service = np.array([vm_index[svc.vm] for svc in services])
        # only VMs that actually carry modelled services need cpu/mem columns
        self._cpu_col = np.array([cpu_idx.get(v, -1) for v in self._vm_ids])
        self._mem_col = np.array([mem_idx.get(v, -1) for v in self._vm_ids])
        self._thr_col = np.array([thr_idx.get(s, -1) for s in self._service_ids])
        self._services_per_vm = np.bincount(self._vm_of_service, minlength=len(vms)).astype(float)
        self._services_per_vm[self._services_per_vm == 0] = 1.0
        self._n_pms = len(pm_ids)

        # response-time reference per service for the reliability response
        rt_by_owner = {
            o.owner: o.threshold for o in scenario.objectives.values()
            if o.kind == KIND_RESPONSE_TIME
        }
        self._rt_ref = np.array(
            [rt_by_owner.get(_root_service(s), self.params.rel_rt_ref_ms)
             for s in self._service_ids]
        )

        # a scaled-out service is measured across its whole replica group
        self._member_idx = [
            np.array([
                svc_index[svc.id] for svc in services
                if _root_service(svc.id) == o.owner
            ])
            for o in self.objectives
        ]

        # price vectors for cost objectives, one column per cost objective;
        # replicas bill against the root service they serve
        self._cost_cols = []
        for obj in self.objectives:
            if obj.model != MODEL_PRICE_SUM:
                self._cost_cols.append(None)
                continue
            member_ids = {
                svc.id for svc in services if _root_service(svc.id) == obj.owner
            }
            member_vms = {
                svc.vm for svc in services if svc.id in member_ids
            }
            weights = np.zeros(len(self.all_pids))
            for pid, spec in prim_specs.items():
                if (spec.scope == "per-service" and spec.owner in member_ids) or (
                    spec.scope == "per-vm-shared" and spec.owner in member_vms
                ):
                    weights[self._all_index[pid]] = spec.price
            self._cost_cols.append(weights)

        self._kinds = [o.kind for o in self.objectives]
        self._noise_kinds = np.array([o.model == MODEL_QUEUE for o in self.objectives])

    # -- batched core ------------------------------------------------------

    def _full_config(self, values: np.ndarray, env) -> np.ndarray:
        base = np.array([float(env.current_configuration[pid]) for pid in self.all_pids])
        full = np.repeat(base[None, :], values.shape[0], axis=0)
        full[:, self._region_cols] = values
        return full

    def _workloads(self, env) -> np.ndarray:
        return np.array([float(env.workloads.get(s, 0.0)) for s in self._service_ids])

    def predict_matrix(self, values: np.ndarray, env) -> np.ndarray:
        """Objective matrix for candidate decisions.

        Args:
            values: integer array of shape (k, len(region.primitive_ids)),
                column order following the region's primitive order.
            env: environment snapshot supplying workloads and the values of
                every primitive outside the region.

        Returns:
            float array of shape (k, len(region.objective_ids)).
        """
        values = np.atleast_2d(np.asarray(values, dtype=float))
        p = self.params
        full = self._full_config(values, env)
        wl = self._workloads(env)

        cap = np.where(self._cpu_col >= 0, full[:, self._cpu_col], 0.0)
        mem = np.where(self._mem_col >= 0, full[:, self._mem_col], 0.0)
        thr = np.where(self._thr_col >= 0, full[:, self._thr_col], 0.0)

        vm_wl = np.bincount(self._vm_of_service, weights=wl, minlength=len(self._vm_ids))
        cpu_demand = vm_wl * p.cpu_demand_per_req
        usage = np.minimum(cap, cpu_demand[None, :])
        pressure = np.zeros((values.shape[0], self._n_pms))
        np.add.at(pressure.T, self._pm_of_vm, usage.T)
        contention = np.maximum(1.0, pressure / p.cpu_contention_limit)
        cpu_eff = cap / contention[:, self._pm_of_vm]

        vm_threads = np.zeros_like(cap)
        np.add.at(vm_threads.T, self._vm_of_service, thr.T)
        saturation = p.thread_sat_per_mb * mem
        overload = np.maximum(0.0, vm_threads - saturation)

        share = cpu_eff / self._services_per_vm[None, :]
        capacity = (
            p.cpu_rate * share[:, self._vm_of_service]
            + p.thread_rate * thr
            - p.overload_penalty * overload[:, self._vm_of_service]
        )
        capacity = np.maximum(capacity, p.min_capacity)

        rho = np.minimum(wl[None, :] / capacity, 0.99)
        rt = p.rt_base_ms / (1.0 - rho)
        tp = np.minimum(wl[None, :], capacity)
        rel = 100.0 * _sigmoid(p.rel_slope * (self._rt_ref[None, :] - rt))
        avail = 100.0 * _sigmoid(p.avail_slope * (p.avail_rt_ref_ms - rt))

        def group_mean(arr, members):
            w = wl[members]
            total = w.sum()
            if total <= 0.0:
                return arr[:, members].mean(axis=1)
            return arr[:, members] @ (w / total)

        out = np.empty((values.shape[0], len(self.objectives)))
        for j, kind in enumerate(self._kinds):
            members = self._member_idx[j]
            if kind == KIND_RESPONSE_TIME:
                out[:, j] = group_mean(rt, members)
            elif kind == KIND_THROUGHPUT:
                out[:, j] = tp[:, members].sum(axis=1)
            elif kind == KIND_RELIABILITY:
                out[:, j] = group_mean(rel, members)
            elif kind == KIND_AVAILABILITY:
                out[:, j] = group_mean(avail, members)
            elif kind == KIND_COST or self._cost_cols[j] is not None:
                out[:, j] = full @ self._cost_cols[j]
            else:
                raise ConfigError(f"objective {self.objective_ids[j]}: no evaluator for {kind}")
        return out

    # -- convenience forms -------------------------------------------------

    def decision_to_row(self, decision: Decision) -> np.ndarray:
        return np.array([decision.assignments[pid] for pid in self.region_pids], dtype=float)

    def predict_vector(self, decision: Decision, env) -> np.ndarray:
        return self.predict_matrix(self.decision_to_row(decision)[None, :], env)[0]

    def predict(self, objective_id: str, decision: Decision, env) -> float:
        j = self.objective_ids.index(objective_id)
        return float(self.predict_vector(decision, env)[j])

    def observe_vector(self, decision: Decision, env, rng) -> np.ndarray:
        """Noisy measurement of what a deployed decision would yield.

        Multiplicative Gaussian noise on queue-model outputs only; price sums
        are billing facts and come back exact. Results are clamped to each
        kind's valid range, throughput additionally to the offered load.
        """
        clean = self.predict_vector(decision, env)
        factors = rng.normal(1.0, self.params.noise_std, size=clean.shape)
        noisy = np.where(self._noise_kinds, clean * factors, clean)
        wl = self._workloads(env)
        for j, kind in enumerate(self._kinds):
            if kind == KIND_RESPONSE_TIME:
                noisy[j] = max(noisy[j], 0.01)
            elif kind == KIND_THROUGHPUT:
                offered = float(wl[self._member_idx[j]].sum())
                noisy[j] = min(max(noisy[j], 0.0), offered)
            elif kind in (KIND_RELIABILITY, KIND_AVAILABILITY):
                noisy[j] = min(max(noisy[j], 0.0), 100.0)
        return noisy

    def observe(self, objective_id: str, decision: Decision, env, rng) -> float:
        j = self.objective_ids.index(objective_id)
        return float(self.observe_vector(decision, env, rng)[j])

    def violation_counts(self, vectors: np.ndarray) -> np.ndarray:
        """Number of breached requirements per row, meeting exactly is a pass."""
        vectors = np.atleast_2d(vectors)
        signed_gap = (vectors - self.thresholds[None, :]) * self.direction_signs[None, :]
        return (signed_gap < 0).sum(axis=1)


class DemandModel:
    """Workload-driven requirement proxies behind utilization and provisioning.

    Demand is what the current workload would need of a primitive; dividing by
    the provisioned value gives utilization. The same series doubles as the
    per-interval requirement record for over/under-provisioning accounting.
    """

    def __init__(self, params: ModelParams):
        self.params = params

    def demand(self, spec, topology: Topology, workloads: dict):
        """Requirement estimate for one primitive, or None if untracked."""
        p = self.params
        if spec.scope == "per-vm-shared":
            load = sum(
                float(workloads.get(svc.id, 0.0))
                for svc in topology.services_on_vm(spec.owner)
            )
            if spec.resource == RES_CPU:
                return load * p.cpu_demand_per_req
            if spec.resource == RES_MEMORY:
                return p.mem_demand_base + load * p.mem_demand_per_req
            return None
        if spec.resource == RES_THREAD:
            return float(workloads.get(spec.owner, 0.0)) * p.thread_demand_per_req
        return None

    def utilization_of(self, spec, provision: float, topology: Topology, workloads: dict):
        d = self.demand(spec, topology, workloads)
        if d is None:
            return None
        if provision <= 0:
            return 1.0
        return min(1.0, d / provision)
