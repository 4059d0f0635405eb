"""One-second-step simulation of a stream workflow under velocity changes.

Every scheduler starts from the same genetic-algorithm plan at second 0.
Velocity events then hand the plan to the scheduler under test, and the
resulting provisions boot for their offer's boot time before they add
capacity.  Cost accrues for every held instance, booting or not.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .cloud import CloudCatalog, VmInstance
from .cost import (
    RateState,
    SchedulingPlan,
    apply_velocity_change,
    compute_rates,
    cost_per_second,
    exec_cost_per_second,
    required_units,
    round_half_up,
    service_units,
    transfer_cost_per_second,
)
from .events import CHANGE_RANGES, DECREASE, INCREASE, PlanDelta, VelocityChangeEvent, apply_delta
from .ga import GaParams, schedule
from .greedy import handle_event
from .reference import baseline_handle_event, lower_bound_series
from .workflow import StreamWorkflow

ADAPTIVE = "adaptive"
GA_REPLAN = "ga-replan"
BASELINE = "baseline"
LOWER_BOUND = "lower-bound"
SCHEDULERS = (ADAPTIVE, GA_REPLAN, BASELINE, LOWER_BOUND)

# initial source rate (MB/s) by experiment direction
DEFAULT_SOURCE_RATE = {INCREASE: 5, DECREASE: 10}


@dataclass(frozen=True)
class EventSpec:
    count: int = 2
    spacing: int = 10
    offset: int = 5
    direction: str = INCREASE
    range: str = "medium"

    def check(self) -> None:
        if self.count < 0 or self.spacing < 1 or self.offset < 0:
            raise ValueError("event count/spacing/offset out of range")
        if self.direction not in CHANGE_RANGES or self.range not in CHANGE_RANGES[self.direction]:
            raise ValueError(f"unknown change {self.direction}/{self.range}")


def generate_events(
    workflow: StreamWorkflow,
    spec: EventSpec,
    seed: int,
    source_units: dict[str, int] | None = None,
) -> list[VelocityChangeEvent]:
    """Seeded velocity events, ``spec.spacing`` seconds apart from ``spec.offset``."""
    spec.check()
    rng = random.Random(seed)
    current = dict(source_units if source_units is not None else workflow.source_units())
    lo, hi = CHANGE_RANGES[spec.direction][spec.range]
    ids = [s.id for s in workflow.external_sources]
    out = []
    for k in range(spec.count):
        src = rng.choice(ids)
        delta = round_half_up(current[src] * rng.uniform(lo, hi))
        if spec.direction == DECREASE:
            delta = min(delta, current[src] - 1)
            current[src] -= delta
        else:
            current[src] += delta
        out.append(VelocityChangeEvent(spec.offset + k * spec.spacing, src, spec.direction, spec.range, delta))
    return out


@dataclass
class ScenarioConfig:
    workflow: StreamWorkflow
    catalog: CloudCatalog
    scheduler: str = ADAPTIVE
    horizon: int = 180
    events: list[VelocityChangeEvent] = field(default_factory=list)
    seed: int = 0
    source_units: dict[str, int] | None = None
    ga: GaParams = GaParams()
    record_wallclock: bool = False

    def check(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        times = [e.at_second for e in self.events]
        if times != sorted(times) or len(set(times)) != len(times):
            raise ValueError("events must be sorted with at most one per second")
        for e in self.events:
            if e.source not in {s.id for s in self.workflow.external_sources}:
                raise ValueError(f"event targets unknown source {e.source!r}")

    def describe(self) -> dict:
        """Resolved, JSON-ready config embedded in every report file."""
        return {
            "workflow": self.workflow.name,
            "scheduler": self.scheduler,
            "horizon": self.horizon,
            "seed": self.seed,
            "source_units": self.source_units,
            "ga": asdict(self.ga),
            "events": [asdict(e) for e in self.events],
        }


@dataclass(frozen=True)
class SecondRecord:
    t: int
    exec_cost: float
    transfer_cost: float
    total_input: float
    total_capacity: float
    deficit: float


@dataclass
class EventRecord:
    event_id: int
    t: int
    kind: str
    delta_units: int
    changes: int
    post_cost_per_s: float
    response_s: int
    wall_s: float | None = None


@dataclass
class SimulationReport:
    config: dict
    series: list[SecondRecord]
    events: list[EventRecord]

    @property
    def exec_total(self) -> float:
        return math.fsum(r.exec_cost for r in self.series)

    @property
    def transfer_total(self) -> float:
        return math.fsum(r.transfer_cost for r in self.series)

    @property
    def total(self) -> float:
        return self.exec_total + self.transfer_total

    def summary(self) -> dict:
        return {
            "exec_total": self.exec_total,
            "transfer_total": self.transfer_total,
            "total": self.total,
            "changes": [e.changes for e in self.events],
            "response_s": [e.response_s for e in self.events],
            "deficit_seconds": sum(1 for r in self.series if r.deficit > 0),
        }


class _Transition:
    """A replan in flight: old instances stay until every target instance is up."""

    def __init__(self, retiring: list[tuple[str, VmInstance]], placements: dict[str, str]):
        self.retiring = retiring
        self.placements = placements


def _replan_delta(
    old: SchedulingPlan, new: SchedulingPlan
) -> tuple[SchedulingPlan, PlanDelta]:
    """Target plan reusing old instances that match (service, cloud, offer)."""
    target = SchedulingPlan(dict(new.placements), {})
    delta = PlanDelta()
    for sid, fresh in new.provisioned.items():
        pool: dict[tuple[str, str], list[VmInstance]] = {}
        for vm in old.instances(sid):
            pool.setdefault((vm.cloud, vm.offer.name), []).append(vm)
        kept, added = [], []
        for vm in fresh:
            bucket = pool.get((vm.cloud, vm.offer.name))
            if bucket:
                kept.append(bucket.pop(0))
            else:
                added.append(vm.offer)
        target.provisioned[sid] = kept
        if added:
            delta.provision[sid] = added
        gone = [vm for bucket in pool.values() for vm in bucket]
        if gone:
            delta.deprovision[sid] = gone
    return target, delta


def initial_plan(
    workflow: StreamWorkflow, catalog: CloudCatalog, rates: RateState, params: GaParams
) -> SchedulingPlan:
    plan, _ = schedule(workflow, catalog, rates, params)
    return plan


def run(scenario: ScenarioConfig, plan0: SchedulingPlan | None = None) -> SimulationReport:
    """Simulate ``scenario.horizon`` seconds; ``plan0`` short-cuts the shared GA phase."""
    scenario.check()
    wf, cat = scenario.workflow, scenario.catalog
    rates = compute_rates(wf, scenario.source_units)
    if scenario.scheduler == LOWER_BOUND:
        return _run_lower_bound(scenario, rates)

    plan = (plan0 if plan0 is not None else initial_plan(wf, cat, rates, scenario.ga)).copy()
    ids = itertools.count(1 + max((vm.global_id for vm in plan.all_instances()), default=-1))
    rng = random.Random(scenario.seed)
    pending = list(scenario.events)
    transition: _Transition | None = None
    series: list[SecondRecord] = []
    records: list[EventRecord] = []

    for t in range(scenario.horizon):
        if pending and pending[0].at_second == t:
            event = pending.pop(0)
            started = time.perf_counter()
            after = apply_velocity_change(rates, wf, event.source, event.signed_delta)
            if scenario.scheduler == GA_REPLAN:
                params = replace(scenario.ga, rng_seed=scenario.ga.rng_seed + 1 + len(records))
                fresh, _ = schedule(wf, cat, after, params)
                target, delta = _replan_delta(plan, fresh)
                retiring = [(sid, vm) for sid, vms in delta.deprovision.items() for vm in vms]
                if transition is not None:
                    retiring = transition.retiring + retiring
                    placements = transition.placements
                else:
                    placements = dict(plan.placements)
                plan = apply_delta(target, PlanDelta(delta.provision, {}), t, ids)
                transition = _Transition(retiring, placements)
            elif scenario.scheduler == ADAPTIVE:
                delta = handle_event(wf, cat, plan, rates, event, rng)
                plan = apply_delta(plan, delta, t, ids)
            else:
                delta = baseline_handle_event(wf, cat, plan, rates, event)
                plan = apply_delta(plan, delta, t, ids)
            wall = time.perf_counter() - started
            rates = after
            boot = max((math.ceil(o.boot_time) for offers in delta.provision.values() for o in offers), default=0)
            records.append(
                EventRecord(
                    event_id=len(records),
                    t=t,
                    kind=event.direction,
                    delta_units=event.signed_delta,
                    changes=delta.changes,
                    post_cost_per_s=cost_per_second(wf, plan, rates, cat).total,
                    response_s=boot,
                    wall_s=wall if scenario.record_wallclock else None,
                )
            )
        if transition is not None and all(vm.is_ready(t) for vm in plan.all_instances()):
            transition = None

        held = transition.retiring if transition else []
        placements = transition.placements if transition else plan.placements
        held_units: dict[str, int] = {}
        for sid, vm in held:
            held_units[sid] = held_units.get(sid, 0) + int(
                vm.offer.mips // (wf.unit_dp_rate * wf.service(sid).mi_per_mb)
            )
        capacity_units = 0
        deficit_units = 0
        for sid in wf.service_ids:
            units = service_units(wf, sid, plan, t) + held_units.get(sid, 0)
            capacity_units += units
            deficit_units += max(0, required_units(wf, rates, sid) - units)
        series.append(
            SecondRecord(
                t,
                exec_cost_per_second(plan, (vm for _, vm in held)),
                transfer_cost_per_second(wf, plan, rates, cat, placements),
                math.fsum(rates.in_stream.values()),
                capacity_units * wf.unit_dp_rate,
                deficit_units * wf.unit_dp_rate,
            )
        )
    return SimulationReport(scenario.describe(), series, records)


def _run_lower_bound(scenario: ScenarioConfig, rates: RateState) -> SimulationReport:
    wf = scenario.workflow
    bound = lower_bound_series(
        wf, scenario.catalog, scenario.horizon, scenario.events, scenario.source_units
    )
    events = {e.at_second: e for e in scenario.events}
    series, records = [], []
    for t, b in enumerate(bound):
        if t in events:
            e = events[t]
            rates = apply_velocity_change(rates, wf, e.source, e.signed_delta)
            records.append(EventRecord(len(records), t, e.direction, e.signed_delta, 0, b.total, 0))
        total_in = math.fsum(rates.in_stream.values())
        need = sum(required_units(wf, rates, sid) for sid in wf.service_ids)
        series.append(SecondRecord(t, b.exec_cost, b.transfer_cost, total_in, need * wf.unit_dp_rate, 0.0))
    return SimulationReport(scenario.describe(), series, records)


# -- repetitions ----------------------------------------------------------------


def experiment(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    schedulers: Sequence[str],
    spec: EventSpec,
    seed: int,
    reps: int = 10,
    horizon: int = 180,
    source_rate: int | None = None,
    ga: GaParams = GaParams(),
) -> dict[str, list[SimulationReport]]:
    """Paired repetitions: per rep every scheduler sees the same events and initial plan."""
    rate = DEFAULT_SOURCE_RATE[spec.direction] if source_rate is None else source_rate
    units = {s.id: rate for s in workflow.external_sources}
    out: dict[str, list[SimulationReport]] = {name: [] for name in schedulers}
    for rep in range(reps):
        rep_seed = seed + rep
        events = generate_events(workflow, spec, rep_seed, units)
        params = replace(ga, rng_seed=rep_seed * 1000)
        plan0 = None
        if any(name != LOWER_BOUND for name in schedulers):
            plan0 = initial_plan(workflow, catalog, compute_rates(workflow, units), params)
        for name in schedulers:
            scenario = ScenarioConfig(
                workflow, catalog, name, horizon, events, rep_seed, dict(units), params
            )
            out[name].append(run(scenario, plan0))
    return out


# -- report files -----------------------------------------------------------------

SERIES_COLUMNS = ("t", "exec_cost", "transfer_cost", "total_input_MBps", "total_capacity_MBps", "deficit_MBps")
EVENT_COLUMNS = ("event_id", "t", "kind", "delta_units", "changes", "post_cost_per_s", "response_s")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _config_line(config: dict) -> str:
    return "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n"


def series_csv(report: SimulationReport) -> str:
    buf = io.StringIO()
    buf.write(_config_line(report.config))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for r in report.series:
        w.writerow([_fmt(v) for v in astuple_record(r)])
    return buf.getvalue()


def astuple_record(r: SecondRecord) -> tuple:
    return (r.t, r.exec_cost, r.transfer_cost, r.total_input, r.total_capacity, r.deficit)


def events_csv(report: SimulationReport) -> str:
    buf = io.StringIO()
    buf.write(_config_line(report.config))
    w = csv.writer(buf, lineterminator="\n")
    cols = EVENT_COLUMNS + (("wall_s",) if any(e.wall_s is not None for e in report.events) else ())
    w.writerow(cols)
    for e in report.events:
        row = [e.event_id, e.t, e.kind, e.delta_units, e.changes, e.post_cost_per_s, e.response_s]
        if len(cols) > len(EVENT_COLUMNS):
            row.append(e.wall_s)
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def summary_json(report: SimulationReport) -> str:
    doc = {"config": report.config, "summary": report.summary()}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(report: SimulationReport, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "series.csv").write_text(series_csv(report))
    (d / "events.csv").write_text(events_csv(report))
    (d / "summary.json").write_text(summary_json(report))


def mean_summary(reports: Sequence[SimulationReport]) -> dict:
    n = len(reports)
    n_events = min((len(r.events) for r in reports), default=0)
    return {
        "workflow": reports[0].config["workflow"],
        "scheduler": reports[0].config["scheduler"],
        "reps": n,
        "seeds": [r.config["seed"] for r in reports],
        "exec_total": math.fsum(r.exec_total for r in reports) / n,
        "transfer_total": math.fsum(r.transfer_total for r in reports) / n,
        "total": math.fsum(r.total for r in reports) / n,
        "changes_per_event": [sum(r.events[k].changes for r in reports) / n for k in range(n_events)],
        "response_s_per_event": [sum(r.events[k].response_s for r in reports) / n for k in range(n_events)],
    }


def mean_series_csv(reports: Sequence[SimulationReport]) -> str:
    n = len(reports)
    buf = io.StringIO()
    buf.write(_config_line({"runs": [r.config for r in reports]}))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for rows in zip(*(r.series for r in reports)):
        t = rows[0].t
        cols = zip(*(astuple_record(r)[1:] for r in rows))
        w.writerow([t] + [_fmt(math.fsum(c) / n) for c in cols])
    return buf.getvalue()


def write_reports(reports: Sequence[SimulationReport], directory: str | Path) -> None:
    """Per-run folders plus the mean-of-reps files for one (scheduler, workflow)."""
    d = Path(directory)
    for k, report in enumerate(reports):
        write_report(report, d / f"run_{k:02d}")
    (d / "mean_summary.json").write_text(json.dumps(mean_summary(reports), indent=2, sort_keys=True) + "\n")
    (d / "mean_series.csv").write_text(mean_series_csv(reports))
