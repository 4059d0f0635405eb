"""Reference schedulers: the reactive baseline and the relaxed lower bound."""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import lil_matrix

from .cloud import CloudCatalog, NetworkRanges
from .cost import (
    CostBreakdown,
    RateState,
    SchedulingPlan,
    apply_velocity_change,
    compute_rates,
    edge_transfer_cost,
    required_units,
    service_units,
    unit_deltas,
    unit_mips,
)
from .events import INCREASE, PlanDelta, VelocityChangeEvent
from .greedy import UnschedulableIncrease
from .workflow import StreamWorkflow, downstream_of


def baseline_handle_event(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    plan: SchedulingPlan,
    rates: RateState,
    event: VelocityChangeEvent,
) -> PlanDelta:
    """Heuristic-free reaction: add the biggest VM until covered, or shed largest-first."""
    delta = PlanDelta()
    if event.resolved_delta_units == 0:
        return delta
    after = apply_velocity_change(rates, workflow, event.source, event.signed_delta)
    affected = downstream_of(workflow, event.source)
    per_service = unit_deltas(workflow, rates, after, affected)
    for sid in affected:
        svc = workflow.service(sid)
        chi = unit_mips(workflow, svc)
        need = required_units(workflow, after, sid)
        have = service_units(workflow, sid, plan)
        if event.direction == INCREASE:
            if per_service[sid] <= 0:
                continue
            cloud = catalog.cloud(plan.placements[sid])
            eligible = [o for o in cloud.offers if o.mips >= chi]
            if not eligible:
                raise UnschedulableIncrease(f"unschedulable increase: no offer on {cloud.id} fits {sid}")
            biggest = max(eligible, key=lambda o: (o.mips, -o.price, o.name))
            units = int(biggest.mips // chi)
            added = []
            while have < need:
                added.append(biggest)
                have += units
            if added:
                delta.provision[sid] = added
        else:
            released = []
            ordered = sorted(
                plan.instances(sid), key=lambda vm: (-vm.offer.mips, -vm.offer.price, vm.global_id)
            )
            for vm in ordered:
                units = int(vm.offer.mips // chi)
                if have - units < need:
                    break
                released.append(vm)
                have -= units
            if released:
                delta.deprovision[sid] = released
    return delta


# -- lower bound ----------------------------------------------------------------


def min_cover_cost(need: int, offers: Sequence[tuple[int, float]]) -> float:
    """Cheapest multiset of (units, price) offers whose units sum to >= need."""
    return _min_cover(need, tuple(sorted(set(offers))))


@lru_cache(maxsize=65536)
def _min_cover(need: int, offers: tuple[tuple[int, float], ...]) -> float:
    if need <= 0:
        return 0.0
    if not offers:
        raise ValueError("no eligible offer")
    best = np.full(need + 1, np.inf)
    best[0] = 0.0
    for u in range(1, need + 1):
        best[u] = min(price + best[max(0, u - units)] for units, price in offers)
    return float(best[need])


def _eligible_offers(catalog: CloudCatalog, chi: float) -> list[tuple[int, float]]:
    return [(int(o.mips // chi), o.price) for _, o in catalog.all_offers() if o.mips >= chi]


def lower_bound_exec(workflow: StreamWorkflow, catalog: CloudCatalog, rates: RateState) -> float:
    """Exec cost per second with every service on its cheapest whole-VM cover from any cloud."""
    total = 0.0
    for svc in workflow.services:
        need = required_units(workflow, rates, svc.id)
        total += min_cover_cost(need, _eligible_offers(catalog, unit_mips(workflow, svc)))
    return total


def relaxed_link(catalog: CloudCatalog, ranges: NetworkRanges = NetworkRanges()) -> tuple[float, float, float]:
    """(latency, bandwidth, cost) no inter-cloud link of ``catalog`` can undercut."""
    n = len(catalog.clouds)
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    if not off:
        return ranges.egress_latency[1], ranges.egress_bandwidth[0], ranges.egress_cost[0]
    lat = max(ranges.egress_latency[1], max(catalog.latency[i][j] for i, j in off))
    bw = min(ranges.egress_bandwidth[0], min(catalog.bandwidth[i][j] for i, j in off))
    cost = min(ranges.egress_cost[0], min(catalog.transfer_cost[i][j] for i, j in off))
    return lat, bw, cost


def lower_bound_transfer(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    rates: RateState,
    ranges: NetworkRanges = NetworkRanges(),
) -> float:
    """Transfer cost per second under the best unconstrained placement.

    Every cross-cloud edge is priced with the relaxed link; the placement
    minimising the total is found exactly as a small integer program.
    """
    clouds = catalog.cloud_ids
    G = len(clouds)
    if G == 1:
        return 0.0
    link = relaxed_link(catalog, ranges)
    unit = workflow.min_dp_unit
    order = workflow.service_ids
    pos = {sid: i for i, sid in enumerate(order)}
    edges = []  # (origin index or -1-cloud, dest index, weight)
    for sid in order:
        for e in workflow.in_edges(sid):
            if workflow.is_source(e.origin):
                stream = rates.source_units[e.origin] * unit * e.percent
                origin = -1 - catalog.index(workflow.source(e.origin).location_cloud)
            else:
                stream = rates.out_stream[e.origin] * e.percent
                origin = pos[e.origin]
            w = edge_transfer_cost(stream, *link)
            if w > 0:
                edges.append((origin, pos[sid], w))
    if not edges:
        return 0.0
    n, m = len(order), len(edges)
    nx = n * G
    c = np.concatenate([np.zeros(nx), [w for _, _, w in edges]])
    rows = n + sum(G if o >= 0 else 1 for o, _, _ in edges)
    A = lil_matrix((rows, nx + m))
    lo = np.zeros(rows)
    hi = np.full(rows, np.inf)
    r = 0
    for v in range(n):
        for k in range(G):
            A[r, v * G + k] = 1
        lo[r] = hi[r] = 1
        r += 1
    for j, (o, d, _) in enumerate(edges):
        if o >= 0:
            # y_e >= x[o,k] - x[d,k] for every cloud k
            for k in range(G):
                A[r, nx + j] = 1
                A[r, o * G + k] = -1
                A[r, d * G + k] = 1
                r += 1
        else:
            # y_e >= 1 - x[d, source cloud]
            A[r, nx + j] = 1
            A[r, d * G + (-1 - o)] = 1
            lo[r] = 1
            r += 1
    integrality = np.concatenate([np.ones(nx), np.zeros(m)])
    res = milp(
        c,
        constraints=LinearConstraint(A.tocsr(), lo, hi),
        integrality=integrality,
        bounds=Bounds(0, 1),
    )
    if not res.success:
        raise RuntimeError(f"lower-bound placement failed: {res.message}")
    return float(res.fun)


def lower_bound_series(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    horizon: int,
    events: Sequence[VelocityChangeEvent],
    source_units: dict[str, int] | None = None,
    ranges: NetworkRanges = NetworkRanges(),
) -> list[CostBreakdown]:
    """Relaxed per-second cost for each second of the horizon."""
    rates = compute_rates(workflow, source_units)
    pending = sorted(events, key=lambda e: e.at_second)
    series = []
    current = None
    for t in range(horizon):
        while pending and pending[0].at_second == t:
            ev = pending.pop(0)
            rates = apply_velocity_change(rates, workflow, ev.source, ev.signed_delta)
            current = None
        if current is None:
            current = CostBreakdown(
                lower_bound_exec(workflow, catalog, rates),
                lower_bound_transfer(workflow, catalog, rates, ranges),
            )
        series.append(current)
    return series


def lower_bound_cost(
    workflow: StreamWorkflow,
    horizon: int,
    catalog: CloudCatalog,
    events: Sequence[VelocityChangeEvent],
    source_units: dict[str, int] | None = None,
    ranges: NetworkRanges = NetworkRanges(),
) -> CostBreakdown:
    series = lower_bound_series(workflow, catalog, horizon, events, source_units, ranges)
    exec_total = sum(b.exec_cost for b in series)
    transfer_total = sum(b.transfer_cost for b in series)
    return CostBreakdown(exec_total, transfer_total)
