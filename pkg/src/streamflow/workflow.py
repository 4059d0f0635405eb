"""Stream-workflow application model.

A workflow is a DAG of always-on services fed by external sources.  Edges
carry the fraction of the origin's output routed to the destination
(1.0 for replica mode, any fraction for partition mode).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

FORMAT_VERSION = 1

REPLICA = "replica"
PARTITION = "partition"
MOVABLE = "movable"
UNMOVABLE = "unmovable"

_PERCENT_TOL = 1e-9


class WorkflowError(ValueError):
    """Raised for lookups of unknown ids or malformed workflow documents."""


@dataclass(frozen=True)
class Service:
    id: str
    mi_per_mb: float
    gamma: float
    mobility: str = MOVABLE
    pinned_cloud: str | None = None

    @property
    def movable(self) -> bool:
        return self.mobility == MOVABLE


@dataclass(frozen=True)
class ExternalSource:
    id: str
    rate: float  # MB/s
    location_cloud: str


@dataclass(frozen=True)
class Edge:
    origin: str
    destination: str
    percent: float = 1.0
    mode: str = REPLICA


@dataclass(frozen=True)
class StreamWorkflow:
    services: tuple[Service, ...]
    external_sources: tuple[ExternalSource, ...]
    edges: tuple[Edge, ...]
    min_dp_unit: float = 1.0
    unit_dp_rate: float = 1.0
    name: str = "workflow"
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        # tuples keep the dataclass hashable-ish and immutable for sharing
        object.__setattr__(self, "services", tuple(self.services))
        object.__setattr__(self, "external_sources", tuple(self.external_sources))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_index", _build_index(self))

    # -- lookups ---------------------------------------------------------

    def service(self, sid: str) -> Service:
        try:
            return self._index["services"][sid]
        except KeyError:
            raise WorkflowError(f"unknown service id {sid!r}") from None

    def source(self, xid: str) -> ExternalSource:
        try:
            return self._index["sources"][xid]
        except KeyError:
            raise WorkflowError(f"unknown source id {xid!r}") from None

    def is_source(self, node_id: str) -> bool:
        return node_id in self._index["sources"]

    @property
    def service_ids(self) -> list[str]:
        return [s.id for s in self.services]

    def in_edges(self, sid: str) -> list[Edge]:
        return self._index["in"].get(sid, [])

    def out_edges(self, node_id: str) -> list[Edge]:
        return self._index["out"].get(node_id, [])

    def parents(self, sid: str) -> list[str]:
        """Service parents only (external sources excluded)."""
        return [e.origin for e in self.in_edges(sid) if not self.is_source(e.origin)]

    def children(self, node_id: str) -> list[str]:
        return [e.destination for e in self.out_edges(node_id)]

    def out_degree(self, sid: str) -> int:
        return len(self.out_edges(sid))

    def topological_order(self) -> list[str]:
        order = self._index["topo"]
        if order is None:
            raise WorkflowError("service graph contains a cycle")
        return list(order)

    def source_units(self) -> dict[str, int]:
        """Initial source rates as integer counts of min_dp_unit per second."""
        return {x.id: rate_to_units(x.rate, self.min_dp_unit) for x in self.external_sources}


def rate_to_units(rate: float, unit: float) -> int:
    units = rate / unit
    rounded = round(units)
    if abs(units - rounded) > 1e-9:
        raise WorkflowError(f"rate {rate} is not a whole multiple of {unit}")
    return int(rounded)


def _build_index(wf: StreamWorkflow) -> dict[str, Any]:
    services = {s.id: s for s in wf.services}
    sources = {x.id: x for x in wf.external_sources}
    ins: dict[str, list[Edge]] = {}
    outs: dict[str, list[Edge]] = {}
    for e in wf.edges:
        ins.setdefault(e.destination, []).append(e)
        outs.setdefault(e.origin, []).append(e)
    return {
        "services": services,
        "sources": sources,
        "in": ins,
        "out": outs,
        "topo": _kahn(wf.services, wf.edges, services),
    }


def _kahn(services, edges, known) -> list[str] | None:
    """Kahn's algorithm, stable w.r.t. declaration order.  None on a cycle."""
    indeg = {s.id: 0 for s in services}
    succ: dict[str, list[str]] = {s.id: [] for s in services}
    for e in edges:
        if e.origin in known and e.destination in known:
            indeg[e.destination] += 1
            succ[e.origin].append(e.destination)
    position = {s.id: i for i, s in enumerate(services)}
    ready = sorted((sid for sid, d in indeg.items() if d == 0), key=position.__getitem__)
    queue = deque(ready)
    order = []
    while queue:
        sid = queue.popleft()
        order.append(sid)
        for child in succ[sid]:
            indeg[child] -= 1
            if indeg[child] == 0:
                queue.append(child)
    if len(order) != len(services):
        return None
    return order


def validate(workflow: StreamWorkflow) -> list[str]:
    """Return every invariant violation found in ``workflow``.

    The result is empty iff the workflow is well formed.  Each message names
    the offending entity and the rule it breaks.
    """
    problems: list[str] = []
    svc_ids = [s.id for s in workflow.services]
    src_ids = [x.id for x in workflow.external_sources]
    seen: set[str] = set()
    for node_id in svc_ids + src_ids:
        if node_id in seen:
            problems.append(f"{node_id}: duplicate id")
        seen.add(node_id)

    if not workflow.min_dp_unit > 0:
        problems.append(f"workflow: min_dp_unit must be > 0 (got {workflow.min_dp_unit})")
    if not workflow.unit_dp_rate > 0:
        problems.append(f"workflow: unit_dp_rate must be > 0 (got {workflow.unit_dp_rate})")

    for s in workflow.services:
        if not s.mi_per_mb > 0:
            problems.append(f"service {s.id}: mi_per_mb must be > 0")
        if not 0.0 <= s.gamma <= 1.0:
            problems.append(f"service {s.id}: gamma {s.gamma} outside [0, 1]")
        if s.mobility not in (MOVABLE, UNMOVABLE):
            problems.append(f"service {s.id}: unknown mobility {s.mobility!r}")
        if s.mobility == UNMOVABLE and not s.pinned_cloud:
            problems.append(f"service {s.id}: unmovable service needs a pinned_cloud")

    for x in workflow.external_sources:
        if x.rate < 0:
            problems.append(f"source {x.id}: rate must be >= 0")
        elif workflow.min_dp_unit > 0:
            units = x.rate / workflow.min_dp_unit
            if abs(units - round(units)) > 1e-9:
                problems.append(f"source {x.id}: rate {x.rate} is not a multiple of min_dp_unit")

    services = set(svc_ids)
    sources = set(src_ids)
    for e in workflow.edges:
        label = f"edge {e.origin}->{e.destination}"
        if e.origin not in services and e.origin not in sources:
            problems.append(f"{label}: unknown origin {e.origin!r}")
        if e.destination not in services:
            problems.append(f"{label}: unknown destination service {e.destination!r}")
        if e.mode not in (REPLICA, PARTITION):
            problems.append(f"{label}: unknown mode {e.mode!r}")
        if not 0.0 < e.percent <= 1.0:
            problems.append(f"{label}: percent {e.percent} outside (0, 1]")
        if e.mode == REPLICA and abs(e.percent - 1.0) > _PERCENT_TOL:
            problems.append(f"{label}: replica edge must carry 100% (got {e.percent:.0%})")

    for origin in svc_ids + src_ids:
        out = workflow.out_edges(origin)
        modes = {e.mode for e in out}
        if len(modes) > 1:
            problems.append(f"{origin}: mixed replica/partition outgoing edges")
        elif modes == {PARTITION}:
            total = sum(e.percent for e in out)
            if abs(total - 1.0) > _PERCENT_TOL:
                problems.append(
                    f"{origin}: partition percents sum {total * 100:g}% != 100%"
                )

    if workflow._index["topo"] is None:
        problems.append("workflow: cycle detected in service graph")
    return problems


def lambda_of(workflow: StreamWorkflow, service_id: str) -> float:
    """External-source arrival rate at a service (MB/s)."""
    workflow.service(service_id)
    return sum(
        workflow.source(e.origin).rate * e.percent
        for e in workflow.in_edges(service_id)
        if workflow.is_source(e.origin)
    )


def downstream_of(workflow: StreamWorkflow, source_id: str) -> list[str]:
    """Services reachable from an external source, in topological order."""
    workflow.source(source_id)
    reached: set[str] = set()
    stack = list(workflow.children(source_id))
    while stack:
        sid = stack.pop()
        if sid in reached:
            continue
        reached.add(sid)
        stack.extend(workflow.children(sid))
    return [sid for sid in workflow.topological_order() if sid in reached]


# -- serialization ---------------------------------------------------------


def to_document(workflow: StreamWorkflow) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "name": workflow.name,
        "min_dp_unit": workflow.min_dp_unit,
        "unit_dp_rate": workflow.unit_dp_rate,
        "services": [
            {
                "id": s.id,
                "mi_per_mb": s.mi_per_mb,
                "gamma": s.gamma,
                "mobility": s.mobility,
                "pinned_cloud": s.pinned_cloud,
            }
            for s in workflow.services
        ],
        "external_sources": [
            {"id": x.id, "rate": x.rate, "location_cloud": x.location_cloud}
            for x in workflow.external_sources
        ],
        "edges": [
            {"origin": e.origin, "destination": e.destination, "percent": e.percent, "mode": e.mode}
            for e in workflow.edges
        ],
    }


def from_document(doc: dict[str, Any]) -> StreamWorkflow:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise WorkflowError(f"unsupported workflow format_version {version!r}")
    try:
        return StreamWorkflow(
            services=[Service(**s) for s in doc["services"]],
            external_sources=[ExternalSource(**x) for x in doc["external_sources"]],
            edges=[Edge(**e) for e in doc["edges"]],
            min_dp_unit=doc.get("min_dp_unit", 1.0),
            unit_dp_rate=doc.get("unit_dp_rate", 1.0),
            name=doc.get("name", "workflow"),
        )
    except (KeyError, TypeError) as exc:
        raise WorkflowError(f"malformed workflow document: {exc}") from exc


def dumps(workflow: StreamWorkflow) -> str:
    return json.dumps(to_document(workflow), indent=2, sort_keys=True) + "\n"


def save(workflow: StreamWorkflow, path: str | Path) -> None:
    Path(path).write_text(dumps(workflow))


def load(path: str | Path) -> StreamWorkflow:
    return from_document(json.loads(Path(path).read_text()))


def ceil_units(rate: float, unit: float) -> int:
    """Whole processing units needed for ``rate`` (tolerates float fuzz)."""
    if rate <= 0:
        return 0
    return math.ceil(rate / unit - 1e-9)
