"""Throughput and cost mathematics evaluated against a scheduling plan.

Rates are MB/s floats derived from integer source rates (counts of
``min_dp_unit`` per second).  Processing capacity is always a whole number
of units, so feasibility is decided on integers: a service is satisfied when
its capacity units reach ``ceil(in_stream / unit_dp_rate)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .cloud import CloudCatalog, VmInstance, VmOffer
from .workflow import Service, StreamWorkflow, ceil_units, downstream_of

EPS = 1e-9


class OfferTooSmall(ValueError):
    pass


class VelocityChangeError(ValueError):
    pass


@dataclass
class SchedulingPlan:
    placements: dict[str, str] = field(default_factory=dict)
    provisioned: dict[str, list[VmInstance]] = field(default_factory=dict)

    def instances(self, sid: str) -> list[VmInstance]:
        return self.provisioned.get(sid, [])

    def all_instances(self) -> list[VmInstance]:
        return [vm for sid in self.provisioned for vm in self.provisioned[sid]]

    def copy(self) -> "SchedulingPlan":
        return SchedulingPlan(
            dict(self.placements), {sid: list(v) for sid, v in self.provisioned.items()}
        )

    def vm_count(self) -> int:
        return sum(len(v) for v in self.provisioned.values())


@dataclass(frozen=True)
class RateState:
    source_units: Mapping[str, int]
    in_stream: Mapping[str, float]
    out_stream: Mapping[str, float]


@dataclass(frozen=True)
class CostBreakdown:
    exec_cost: float = 0.0
    transfer_cost: float = 0.0

    @property
    def total(self) -> float:
        return self.exec_cost + self.transfer_cost

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(
            self.exec_cost + other.exec_cost, self.transfer_cost + other.transfer_cost
        )


# -- per-VM and per-service rates ----------------------------------------------


def unit_mips(workflow: StreamWorkflow, service: Service) -> float:
    """MIPS needed to process one stream unit per second."""
    return workflow.unit_dp_rate * service.mi_per_mb


def vm_units(workflow: StreamWorkflow, service: Service, offer: VmOffer) -> int:
    chi = unit_mips(workflow, service)
    if offer.mips < chi:
        raise OfferTooSmall(
            f"offer too small: {offer.name} has {offer.mips} MIPS < {chi} required by {service.id}"
        )
    return int(offer.mips // chi)


def vm_rate(workflow: StreamWorkflow, service: Service, offer: VmOffer) -> float:
    chi = unit_mips(workflow, service)
    return vm_units(workflow, service, offer) * chi / service.mi_per_mb


def service_units(
    workflow: StreamWorkflow, sid: str, plan: SchedulingPlan, now: int | None = None
) -> int:
    """Capacity units of a service; instances still booting at ``now`` count 0."""
    svc = workflow.service(sid)
    return sum(vm_units(workflow, svc, vm.offer) for vm in plan.instances(sid) if vm.is_ready(now))


def service_rate(
    workflow: StreamWorkflow, sid: str, plan: SchedulingPlan, now: int | None = None
) -> float:
    return service_units(workflow, sid, plan, now) * workflow.unit_dp_rate


# -- stream propagation -----------------------------------------------------


def compute_rates(
    workflow: StreamWorkflow,
    source_units: Mapping[str, int] | None = None,
    plan: SchedulingPlan | None = None,
    literal_capacity: bool = False,
) -> RateState:
    """Propagate source rates through the DAG in topological order.

    By default a child receives ``out_stream(parent) * percent``.  With
    ``literal_capacity`` the parent's processing capacity replaces its
    input when forming the child's share (``gamma * capacity * percent``);
    this needs a plan.
    """
    if source_units is None:
        source_units = workflow.source_units()
    if literal_capacity and plan is None:
        raise ValueError("literal_capacity needs a plan")
    unit = workflow.min_dp_unit
    ins: dict[str, float] = {}
    outs: dict[str, float] = {}
    for sid in workflow.topological_order():
        svc = workflow.service(sid)
        total = 0.0
        for e in workflow.in_edges(sid):
            if workflow.is_source(e.origin):
                total += source_units[e.origin] * unit * e.percent
            elif literal_capacity:
                parent = workflow.service(e.origin)
                total += parent.gamma * service_rate(workflow, e.origin, plan) * e.percent
            else:
                total += outs[e.origin] * e.percent
        ins[sid] = total
        outs[sid] = svc.gamma * total
    return RateState(dict(source_units), ins, outs)


def required_units(workflow: StreamWorkflow, rates: RateState, sid: str) -> int:
    return ceil_units(rates.in_stream[sid], workflow.unit_dp_rate)


def is_feasible(
    workflow: StreamWorkflow, plan: SchedulingPlan, rates: RateState, now: int | None = None
) -> bool:
    """True iff every service's capacity covers its input rate."""
    return all(
        service_units(workflow, sid, plan, now) >= required_units(workflow, rates, sid)
        for sid in workflow.service_ids
    )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + EPS))


def percent_to_units(rate_units: int, fraction: float) -> int:
    """Change of ``fraction`` of a rate, rounded to the nearest whole unit."""
    return round_half_up(rate_units * fraction)


def apply_velocity_change(
    rates: RateState, workflow: StreamWorkflow, source_id: str, delta_units: int
) -> RateState:
    """Rates after adding ``delta_units`` (negative for a decrease) to one source."""
    workflow.source(source_id)
    current = rates.source_units[source_id]
    if delta_units < 0:
        if -delta_units >= current:
            raise VelocityChangeError(
                f"decrease of {-delta_units} units must stay below the current rate "
                f"{current} of source {source_id}"
            )
    if delta_units == 0:
        return rates
    units = dict(rates.source_units)
    units[source_id] = current + delta_units
    return compute_rates(workflow, units)


def unit_deltas(
    workflow: StreamWorkflow,
    before: RateState,
    after: RateState,
    services: Iterable[str],
) -> dict[str, int]:
    """Change in required processing units per service (signed)."""
    return {
        sid: required_units(workflow, after, sid) - required_units(workflow, before, sid)
        for sid in services
    }


def affected_services(workflow: StreamWorkflow, source_id: str) -> list[str]:
    return downstream_of(workflow, source_id)


# -- costs ----------------------------------------------------------------------


def exec_cost_per_second(plan: SchedulingPlan, extra: Iterable[VmInstance] = ()) -> float:
    """Cents per second for every provisioned instance, booting ones included."""
    return sum(vm.offer.price for vm in plan.all_instances()) + sum(vm.offer.price for vm in extra)


def edge_transfer_cost(stream: float, latency: float, bandwidth: float, cost: float) -> float:
    """Cents per second to ship ``stream`` MB/s across one inter-cloud link.

    When the stream cannot cross the link within a second (transfer time
    plus latency above one second) only ``stream / transfer_time`` is
    billed.
    """
    if stream <= 0:
        return 0.0
    rho = stream / bandwidth + latency
    moved = stream if rho <= 1.0 else stream / rho
    return moved * cost


def transfer_cost_per_second(
    workflow: StreamWorkflow,
    plan: SchedulingPlan,
    rates: RateState,
    catalog: CloudCatalog,
    placements: Mapping[str, str] | None = None,
) -> float:
    placements = plan.placements if placements is None else placements
    unit = workflow.min_dp_unit
    total = 0.0
    for sid in workflow.service_ids:
        dest = placements[sid]
        for e in workflow.in_edges(sid):
            if workflow.is_source(e.origin):
                origin_cloud = workflow.source(e.origin).location_cloud
                stream = rates.source_units[e.origin] * unit * e.percent
            else:
                origin_cloud = placements[e.origin]
                stream = rates.out_stream[e.origin] * e.percent
            if origin_cloud == dest:
                continue
            total += edge_transfer_cost(stream, *catalog.link(origin_cloud, dest))
    return total


def cost_per_second(
    workflow: StreamWorkflow, plan: SchedulingPlan, rates: RateState, catalog: CloudCatalog
) -> CostBreakdown:
    return CostBreakdown(
        exec_cost_per_second(plan), transfer_cost_per_second(workflow, plan, rates, catalog)
    )


def total_cost(per_second: Iterable[CostBreakdown]) -> CostBreakdown:
    exec_total = 0.0
    transfer_total = 0.0
    for b in per_second:
        exec_total += b.exec_cost
        transfer_total += b.transfer_cost
    return CostBreakdown(exec_total, transfer_total)


def plan_violations(
    workflow: StreamWorkflow, plan: SchedulingPlan
) -> list[str]:
    """Structural plan invariants (pinning, instance cloud, offer size)."""
    problems = []
    for svc in workflow.services:
        cloud = plan.placements.get(svc.id)
        if cloud is None:
            problems.append(f"{svc.id}: no placement")
            continue
        if not svc.movable and cloud != svc.pinned_cloud:
            problems.append(f"{svc.id}: unmovable service placed on {cloud}, pinned {svc.pinned_cloud}")
        chi = unit_mips(workflow, svc)
        for vm in plan.instances(svc.id):
            if vm.cloud != cloud:
                problems.append(f"{svc.id}: instance {vm.global_id} on {vm.cloud}, placed on {cloud}")
            if vm.offer.mips < chi:
                problems.append(f"{svc.id}: instance {vm.global_id} below unit MIPS")
    return problems
