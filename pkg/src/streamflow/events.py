"""Velocity change events and plan deltas shared by schedulers and the simulator."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .cloud import VmInstance, VmOffer
from .cost import SchedulingPlan

INCREASE = "increase"
DECREASE = "decrease"

# percentage ranges of the current rate, by direction and range name
CHANGE_RANGES = {
    INCREASE: {"low": (0.10, 0.30), "medium": (0.50, 0.70), "high": (0.90, 1.00)},
    DECREASE: {"low": (0.05, 0.15), "medium": (0.25, 0.35), "high": (0.45, 0.50)},
}


@dataclass(frozen=True)
class VelocityChangeEvent:
    at_second: int
    source: str
    direction: str
    range: str
    resolved_delta_units: int

    @property
    def signed_delta(self) -> int:
        return self.resolved_delta_units if self.direction == INCREASE else -self.resolved_delta_units


@dataclass
class PlanDelta:
    provision: dict[str, list[VmOffer]] = field(default_factory=dict)
    deprovision: dict[str, list[VmInstance]] = field(default_factory=dict)

    @property
    def changes(self) -> int:
        return sum(map(len, self.provision.values())) + sum(map(len, self.deprovision.values()))

    def is_empty(self) -> bool:
        return self.changes == 0


def apply_delta(
    plan: SchedulingPlan, delta: PlanDelta, now: int, ids: itertools.count
) -> SchedulingPlan:
    """New plan with provisions booting from ``now`` and deprovisions removed."""
    out = plan.copy()
    for sid, offers in delta.provision.items():
        cloud = out.placements[sid]
        out.provisioned.setdefault(sid, []).extend(
            VmInstance(next(ids), o, cloud, now + math.ceil(o.boot_time)) for o in offers
        )
    for sid, gone in delta.deprovision.items():
        drop = {vm.global_id for vm in gone}
        out.provisioned[sid] = [vm for vm in out.provisioned.get(sid, []) if vm.global_id not in drop]
    return out
