"""Shared builders for small hand-checkable models."""

from __future__ import annotations

import random

import pytest

from streamflow.cloud import Cloud, CloudCatalog, VmInstance, VmOffer, default_catalog
from streamflow.workflow import MOVABLE, PARTITION, REPLICA, UNMOVABLE, Edge, ExternalSource, Service, StreamWorkflow


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


def chain(rate=5.0, gammas=(0.4, 1.0), mi=2000.0, cloud="a"):
    """ex -> S0 -> S1 -> ... on replica edges."""
    services = [Service(f"S{i}", mi, g, MOVABLE, None) for i, g in enumerate(gammas)]
    edges = [Edge("ex", "S0")] + [Edge(f"S{i}", f"S{i + 1}") for i in range(len(gammas) - 1)]
    return StreamWorkflow(services, [ExternalSource("ex", rate, cloud)], edges, name="chain")


def two_cloud_catalog(offers_a, offers_b=None, latency=0.02, bandwidth=150.0, cost=0.015):
    offers_b = offers_a if offers_b is None else offers_b
    return CloudCatalog(
        (Cloud("a", tuple(offers_a)), Cloud("b", tuple(offers_b))),
        ((0, latency), (latency, 0)),
        ((700.0, bandwidth), (bandwidth, 700.0)),
        ((0, cost), (cost, 0)),
    )


def instances(cloud, offers, start=0, ready_at=0):
    return [VmInstance(start + k, o, cloud, ready_at) for k, o in enumerate(offers)]


def random_dag(rng: random.Random, n_services: int, clouds=("a", "b"), n_sources=None):
    """Random acyclic workflow with mixed replica/partition emitters."""
    ids = [f"S{i}" for i in range(n_services)]
    n_sources = n_sources or rng.randint(1, 3)
    sources = [ExternalSource(f"x{k}", float(rng.randint(1, 12)), rng.choice(clouds)) for k in range(n_sources)]
    services = []
    for sid in ids:
        if rng.random() < 0.5:
            services.append(Service(sid, round(rng.uniform(1348, 2674), 2), round(rng.uniform(0, 1), 3), MOVABLE, None))
        else:
            services.append(Service(sid, round(rng.uniform(1348, 2674), 2), round(rng.uniform(0, 1), 3), UNMOVABLE, rng.choice(clouds)))
    edges = []
    emitters = [s.id for s in sources] + ids
    for k, origin in enumerate(emitters):
        later = ids[max(0, k - n_sources + 1):] if origin.startswith("S") else ids
        targets = [t for t in later if t != origin]
        if not targets:
            continue
        chosen = rng.sample(targets, rng.randint(0, min(3, len(targets))))
        if origin.startswith("x") and not chosen:
            chosen = [rng.choice(targets)]
        if len(chosen) > 1 and rng.random() < 0.4:
            cuts = sorted(rng.sample(range(1, 10), len(chosen) - 1))
            parts = [b - a for a, b in zip([0] + cuts, cuts + [10])]
            edges.extend(Edge(origin, t, p / 10, PARTITION) for t, p in zip(chosen, parts))
        else:
            edges.extend(Edge(origin, t, 1.0, REPLICA) for t in chosen)
    return StreamWorkflow(services, sources, edges, name="random")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
