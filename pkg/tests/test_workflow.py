import itertools
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from streamflow import structures
from streamflow.workflow import (
    PARTITION,
    UNMOVABLE,
    Edge,
    ExternalSource,
    Service,
    StreamWorkflow,
    WorkflowError,
    downstream_of,
    dumps,
    from_document,
    lambda_of,
    to_document,
    validate,
)

from conftest import chain, random_dag


def _svc(sid, gamma=0.5):
    return Service(sid, 2000.0, gamma, "movable", None)


def test_valid_chain_has_no_violations():
    assert validate(chain(gammas=(0.5, 0.5, 0.5))) == []


def test_two_cycle_is_reported_once():
    wf = StreamWorkflow(
        [_svc("A"), _svc("B")],
        [ExternalSource("ex", 1, "a")],
        [Edge("ex", "A"), Edge("A", "B"), Edge("B", "A")],
    )
    problems = validate(wf)
    assert sum("cycle detected" in p for p in problems) == 1


def test_partition_sum_rule():
    wf = StreamWorkflow(
        [_svc("A"), _svc("B"), _svc("C")],
        [ExternalSource("ex", 1, "a")],
        [Edge("ex", "A"), Edge("A", "B", 0.6, PARTITION), Edge("A", "C", 0.3, PARTITION)],
    )
    problems = validate(wf)
    assert len(problems) == 1
    assert "partition percents sum 90%" in problems[0]


def test_other_violations_are_named():
    wf = StreamWorkflow(
        [Service("A", 2000, 0.5, UNMOVABLE, None), _svc("A")],
        [ExternalSource("ex", 1, "a")],
        [Edge("ex", "A", 0.5), Edge("ghost", "A")],
    )
    text = "\n".join(validate(wf))
    assert "duplicate" in text
    assert "pinned_cloud" in text
    assert "ghost" in text


def test_lambda_of_examples():
    two = StreamWorkflow(
        [_svc("A"), _svc("B")],
        [ExternalSource("x", 5, "a"), ExternalSource("y", 3, "a")],
        [Edge("x", "A"), Edge("y", "A"), Edge("A", "B")],
    )
    assert lambda_of(two, "A") == 8
    assert lambda_of(two, "B") == 0
    part = StreamWorkflow(
        [_svc("A"), _svc("B")],
        [ExternalSource("x", 10, "a")],
        [Edge("x", "A", 0.5, PARTITION), Edge("x", "B", 0.5, PARTITION)],
    )
    assert lambda_of(part, "A") == 5
    with pytest.raises(WorkflowError):
        lambda_of(part, "Z")


def test_downstream_examples():
    tree = StreamWorkflow(
        [_svc("A"), _svc("B"), _svc("C")],
        [ExternalSource("ex", 1, "a")],
        [Edge("ex", "A"), Edge("A", "B"), Edge("A", "C")],
    )
    assert downstream_of(tree, "ex") == ["A", "B", "C"]
    diamond = StreamWorkflow(
        [_svc(s) for s in "ABCD"],
        [ExternalSource("ex", 1, "a"), ExternalSource("idle", 1, "a")],
        [Edge("ex", "A"), Edge("A", "B"), Edge("A", "C"), Edge("B", "D"), Edge("C", "D")],
    )
    assert downstream_of(diamond, "ex") == ["A", "B", "C", "D"]
    assert downstream_of(diamond, "idle") == []
    with pytest.raises(WorkflowError):
        downstream_of(diamond, "nope")


def _closure(wf, start):
    seen, stack = set(), [start]
    while stack:
        node = stack.pop()
        for e in wf.edges:
            if e.origin == node and e.destination not in seen:
                seen.add(e.destination)
                stack.append(e.destination)
    return seen


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_downstream_matches_transitive_closure(seed, n):
    wf = random_dag(random.Random(seed), n)
    topo = wf.topological_order()
    for src in wf.external_sources:
        got = downstream_of(wf, src.id)
        assert set(got) == _closure(wf, src.id)
        assert len(got) == len(set(got))
        assert got == sorted(got, key=topo.index)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_random_dags_validate_and_round_trip(seed, n):
    wf = random_dag(random.Random(seed), n)
    assert validate(wf) == []
    assert validate(wf) == validate(wf)
    again = from_document(json.loads(dumps(wf)))
    assert to_document(again) == to_document(wf)


def test_unknown_format_version_rejected():
    doc = to_document(chain())
    doc["format_version"] = 99
    with pytest.raises(WorkflowError):
        from_document(doc)


@pytest.mark.parametrize(
    "structure,size,count",
    [(s, z, n) for s, sizes in structures.SIZES.items() for z, n in sizes.items()],
)
def test_generated_structures(structure, size, count):
    wf = structures.generate_named(structure, size, seed=7)
    assert len(wf.services) == count
    assert wf.name == f"{structures.DISPLAY[structure]}_{count}"
    assert validate(wf) == []
    for svc in wf.services:
        assert 1348 <= svc.mi_per_mb <= 2674
        assert 0.01 <= svc.gamma <= 0.5
    assert sum(not s.movable for s in wf.services) == round(count / 2)
    # every service is fed by some source
    fed = set(itertools.chain.from_iterable(downstream_of(wf, x.id) for x in wf.external_sources))
    assert fed == set(wf.service_ids)


def test_generator_is_deterministic():
    a = dumps(structures.generate_named("cybershake", "medium", 3))
    b = dumps(structures.generate_named("cybershake", "medium", 3))
    c = dumps(structures.generate_named("cybershake", "medium", 4))
    assert a == b != c


def test_evaluation_grid_order():
    names = [wf.name for wf in structures.evaluation_workflows(1)]
    assert names[:4] == ["Montage_25", "Inspiral_30", "Epigenomics_24", "CyberShake_30"]
    assert names[-1] == "CyberShake_100"
    assert len(names) == 12
