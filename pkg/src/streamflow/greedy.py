"""Two-level greedy runtime adaptation with Minimax alpha-beta VM selection.

Level one finds the services whose input rate moves after a velocity
change.  Level two walks them in topological order and, per service,
repeatedly plays a depth-2 game over shuffled candidates (offers to add or
instances to release) until the unit demand is met.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .cloud import CloudCatalog, VmInstance, VmOffer
from .cost import (
    RateState,
    SchedulingPlan,
    apply_velocity_change,
    required_units,
    service_units,
    unit_deltas,
    unit_mips,
)
from .events import INCREASE, PlanDelta, VelocityChangeEvent
from .workflow import StreamWorkflow, downstream_of

DEPTH = 2
INF = float("inf")


class UnschedulableIncrease(RuntimeError):
    pass


@dataclass
class GameTreeNode:
    vm_global_id: int = -1
    value: float = INF
    children: list["GameTreeNode"] = field(default_factory=list)
    payload: VmOffer | VmInstance | None = None

    @property
    def offer(self) -> VmOffer | None:
        if isinstance(self.payload, VmInstance):
            return self.payload.offer
        return self.payload


def _tie_key(node: GameTreeNode) -> tuple[float, str]:
    offer = node.offer
    if offer is None:
        return (INF, "")
    return (offer.price, offer.name)


def minimax_alpha_beta(
    depth: int,
    maximizing: bool,
    node: GameTreeNode,
    alpha: GameTreeNode,
    beta: GameTreeNode,
    evaluate: Callable[[GameTreeNode], GameTreeNode] = lambda n: n,
) -> GameTreeNode:
    """Alpha-beta search returning the node object that carries the best value.

    Equal values are broken towards the lower-priced, then alphabetically
    first, offer so the chosen VM is deterministic.
    """
    if depth == 0:
        return evaluate(node)
    if maximizing:
        for child in node.children:
            val = minimax_alpha_beta(depth - 1, False, child, alpha, beta, evaluate)
            if val.value > alpha.value or (
                val.value == alpha.value and _tie_key(val) < _tie_key(alpha)
            ):
                alpha = val
            if beta.value <= alpha.value:
                break  # alpha cut-off
        return alpha
    for child in node.children:
        val = minimax_alpha_beta(depth - 1, True, child, alpha, beta, evaluate)
        if val.value < beta.value or (val.value == beta.value and _tie_key(val) < _tie_key(beta)):
            beta = val
        if beta.value <= alpha.value:
            break  # beta cut-off
    return beta


def search(root: GameTreeNode, depth: int, evaluate) -> GameTreeNode:
    return minimax_alpha_beta(
        depth, True, root, GameTreeNode(-1, -INF), GameTreeNode(-1, INF), evaluate
    )


def build_tree(leaves: Sequence[GameTreeNode], rng: random.Random, depth: int = DEPTH) -> GameTreeNode:
    """Shuffle leaves and hang them under a uniform-depth tree.

    Each level splits its nodes into ``ceil(n ** (1/levels_left))`` groups of
    near-equal size, so depth 2 gives about sqrt(n) min-nodes under the root.
    """
    nodes = list(leaves)
    rng.shuffle(nodes)
    return _group(nodes, depth)


def _group(nodes: list[GameTreeNode], depth: int) -> GameTreeNode:
    if depth == 0:
        assert len(nodes) == 1
        return nodes[0]
    parent = GameTreeNode(-1, INF if depth % 2 else -INF)
    if depth == 1:
        parent.children = nodes
        return parent
    n = len(nodes)
    k = min(n, max(1, math.ceil(n ** (1.0 / depth) - 1e-9)))
    base, extra = divmod(n, k)
    start = 0
    for g in range(k):
        size = base + (1 if g < extra else 0)
        parent.children.append(_group(nodes[start:start + size], depth - 1))
        start += size
    return parent


@dataclass(frozen=True)
class EvalContext:
    kind: str
    units: int  # reqUnits for an increase, redUnits for a decrease
    unit_mips: float
    deps: int = 1


def evaluate(node: GameTreeNode, ctx: EvalContext) -> GameTreeNode:
    """Score a leaf: higher is a better VM to add (increase) or release (decrease)."""
    if ctx.units <= 0:
        raise ValueError("evaluate needs a positive unit demand")
    offer = node.offer
    achieved = int(offer.mips // ctx.unit_mips)
    if ctx.kind == INCREASE:
        boot = max(offer.boot_time, 1.0)
        value = (achieved / (ctx.units * offer.price)) / boot
        value += math.floor(offer.mips / (ctx.unit_mips * ctx.deps)) / offer.price
    else:
        value = achieved / (ctx.units * offer.price)
    node.value = value
    return node


def extra_units(workflow: StreamWorkflow, sid: str, plan: SchedulingPlan, rates: RateState) -> int:
    """Capacity units beyond what the current input needs."""
    return service_units(workflow, sid, plan) - required_units(workflow, rates, sid)


def _deps(workflow: StreamWorkflow, sid: str) -> int:
    return max(1, workflow.out_degree(sid))


def increase_proc(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    sid: str,
    plan: SchedulingPlan,
    rates: RateState,
    delta_units: int,
    rng: random.Random,
    depth: int = DEPTH,
) -> list[VmOffer]:
    """Offers to provision so ``sid`` absorbs ``delta_units`` more units."""
    svc = workflow.service(sid)
    chi = unit_mips(workflow, svc)
    cloud = catalog.cloud(plan.placements[sid])
    available = [o for o in cloud.offers if o.mips >= chi]
    if not available:
        raise UnschedulableIncrease(f"unschedulable increase: no offer on {cloud.id} fits {sid}")
    req = delta_units - extra_units(workflow, sid, plan, rates)
    nodes = [GameTreeNode(k, payload=o) for k, o in enumerate(available)]
    chosen: list[VmOffer] = []
    deps = _deps(workflow, sid)
    while req > 0:
        root = build_tree(nodes, rng, depth)
        ctx = EvalContext(INCREASE, req, chi, deps)
        best = search(root, depth, lambda n: evaluate(n, ctx))
        chosen.append(best.payload)
        req -= int(best.payload.mips // chi)
    return chosen


def decrease_proc(
    workflow: StreamWorkflow,
    sid: str,
    plan: SchedulingPlan,
    rates: RateState,
    delta_units: int,
    rng: random.Random,
    depth: int = DEPTH,
) -> list[VmInstance]:
    """Instances of ``sid`` that can be released after a drop of ``delta_units``."""
    svc = workflow.service(sid)
    chi = unit_mips(workflow, svc)
    red = delta_units + extra_units(workflow, sid, plan, rates)
    candidates = list(plan.instances(sid))
    released: list[VmInstance] = []
    deps = _deps(workflow, sid)
    while red > 0:
        candidates = [vm for vm in candidates if int(vm.offer.mips // chi) <= red]
        if not candidates:
            break
        nodes = [GameTreeNode(vm.global_id, payload=vm) for vm in candidates]
        root = build_tree(nodes, rng, depth)
        ctx = EvalContext("decrease", red, chi, deps)
        best = search(root, depth, lambda n: evaluate(n, ctx))
        vm = best.payload
        released.append(vm)
        red -= int(vm.offer.mips // chi)
        candidates = [c for c in candidates if c.global_id != vm.global_id]
    return released


def handle_event(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    plan: SchedulingPlan,
    rates: RateState,
    event: VelocityChangeEvent,
    rng: random.Random,
    depth: int = DEPTH,
) -> PlanDelta:
    """Revise ``plan`` for one velocity change; ``rates`` are the pre-change rates."""
    delta = PlanDelta()
    if event.resolved_delta_units == 0:
        return delta
    after = apply_velocity_change(rates, workflow, event.source, event.signed_delta)
    affected = downstream_of(workflow, event.source)
    per_service = unit_deltas(workflow, rates, after, affected)
    for sid in affected:
        if event.direction == INCREASE:
            if per_service[sid] > 0:
                offers = increase_proc(
                    workflow, catalog, sid, plan, rates, per_service[sid], rng, depth
                )
                if offers:
                    delta.provision[sid] = offers
        else:
            released = decrease_proc(workflow, sid, plan, rates, -per_service[sid], rng, depth)
            if released:
                delta.deprovision[sid] = released
    return delta
