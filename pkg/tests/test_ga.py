import itertools
import random

import pytest

from streamflow import structures
from streamflow.cloud import Cloud, CloudCatalog, VmOffer
from streamflow.cost import (
    compute_rates,
    cost_per_second,
    is_feasible,
    plan_violations,
    required_units,
    unit_mips,
)
from streamflow.ga import (
    Chromosome,
    GaParams,
    PlacementProblem,
    UnschedulableError,
    evolve,
    fitness,
    random_chromosome,
    schedule,
)
from streamflow.workflow import Edge, ExternalSource, Service, StreamWorkflow

from conftest import chain, two_cloud_catalog


def tiny_instance():
    """Two services, two clouds, three offers per cloud."""
    offers_a = [VmOffer("a1", 1000, 0.0030), VmOffer("a2", 2000, 0.0050), VmOffer("a3", 3000, 0.0080)]
    offers_b = [VmOffer("b1", 1000, 0.0020), VmOffer("b2", 2000, 0.0045), VmOffer("b3", 3000, 0.0055)]
    cat = two_cloud_catalog(offers_a, offers_b, latency=0.02, bandwidth=150, cost=0.002)
    wf = StreamWorkflow(
        [Service("A", 1000, 0.6, "movable", None), Service("B", 1000, 1.0, "movable", None)],
        [ExternalSource("x", 5, "a")],
        [Edge("x", "A"), Edge("A", "B")],
    )
    return wf, cat


def exhaustive_optimum(wf, cat):
    rates = compute_rates(wf)
    best = float("inf")
    per_service = []
    for svc in wf.services:
        need = required_units(wf, rates, svc.id)
        chi = unit_mips(wf, svc)
        options = []
        for cloud in cat.clouds:
            eligible = [o for o in cloud.offers if o.mips >= chi]
            for size in range(1, need + 1):
                for combo in itertools.combinations_with_replacement(eligible, size):
                    if sum(o.mips // chi for o in combo) >= need:
                        options.append((cloud.id, combo))
        per_service.append(options)
    from streamflow.cost import SchedulingPlan
    from conftest import instances

    for choice in itertools.product(*per_service):
        plan = SchedulingPlan()
        for svc, (cid, combo) in zip(wf.services, choice):
            plan.placements[svc.id] = cid
            plan.provisioned[svc.id] = instances(cid, combo)
        best = min(best, cost_per_second(wf, plan, rates, cat).total)
    return best


def test_evolve_finds_exhaustive_optimum():
    wf, cat = tiny_instance()
    optimum = exhaustive_optimum(wf, cat)
    problem = PlacementProblem(wf, cat, compute_rates(wf))
    hits = sum(
        evolve(problem, GaParams(rng_seed=s)).best.fitness == pytest.approx(optimum, rel=1e-12)
        for s in range(10)
    )
    assert hits >= 9


@pytest.fixture(scope="module")
def montage25():
    return structures.generate_named("montage", "small", 2019)


def test_elite_trace_non_increasing(montage25, catalog):
    problem = PlacementProblem(montage25, catalog, compute_rates(montage25))
    for seed in range(10):
        trace = evolve(problem, GaParams(rng_seed=seed)).trace
        assert len(trace) == 51
        assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_zero_generations_returns_best_initial(montage25, catalog):
    problem = PlacementProblem(montage25, catalog, compute_rates(montage25))
    result = evolve(problem, GaParams(generation_limit=0, rng_seed=3))
    rng = random.Random(3)
    initial = [problem.random_chromosome(rng) for _ in range(50)]
    problem.evaluate(initial)
    assert result.best.fitness == min(c.fitness for c in initial)
    assert result.trace == [result.best.fitness]


def test_evolve_is_reproducible(montage25, catalog):
    rates = compute_rates(montage25)
    a, ra = schedule(montage25, catalog, rates, GaParams(rng_seed=11))
    b, rb = schedule(montage25, catalog, rates, GaParams(rng_seed=11))
    assert ra.trace == rb.trace
    assert a == b


def test_decoded_plans_are_valid(catalog):
    for wf in structures.evaluation_workflows(5)[:4]:
        rates = compute_rates(wf)
        plan, result = schedule(wf, catalog, rates, GaParams(rng_seed=1, generation_limit=10))
        assert is_feasible(wf, plan, rates)
        assert plan_violations(wf, plan) == []
        assert cost_per_second(wf, plan, rates, catalog).total == pytest.approx(result.best.fitness, rel=1e-12)


def test_every_population_member_is_feasible(montage25, catalog):
    rates = compute_rates(montage25)
    problem = PlacementProblem(montage25, catalog, rates)
    rng = random.Random(0)
    pop = [problem.random_chromosome(rng) for _ in range(20)]
    for _ in range(100):
        a, b = rng.sample(pop, 2)
        c, d = problem.crossover(a, b, rng)
        pop.extend([problem.mutate(c, rng), d])
    for chrom in pop:
        assert is_feasible(montage25, problem.decode(chrom), rates)


def test_random_chromosome_examples():
    one = CloudCatalog((Cloud("a", (VmOffer("big", 10000, 0.01),)),), ((0,),), ((700,),), ((0,),))
    wf = chain(rate=3, gammas=(0.5,), mi=1000)
    chrom = random_chromosome(wf, one, compute_rates(wf), seed=0)
    assert [o.name for o in chrom.genes[0].offers] == ["big"]

    three = CloudCatalog((Cloud("a", (VmOffer("t", 3000, 0.01),)),), ((0,),), ((700,),), ((0,),))
    wf5 = chain(rate=5, gammas=(0.5,), mi=1000)
    chrom = random_chromosome(wf5, three, compute_rates(wf5), seed=0)
    assert len(chrom.genes[0].offers) == 2


def test_pinned_services_keep_their_cloud(catalog):
    wf = StreamWorkflow(
        [Service("A", 2000, 0.5, "unmovable", "azure")],
        [ExternalSource("x", 5, "amazon")],
        [Edge("x", "A")],
    )
    problem = PlacementProblem(wf, catalog, compute_rates(wf))
    rng = random.Random(1)
    azure = catalog.index("azure")
    assert all(problem.random_chromosome(rng).genes[0].cloud == azure for _ in range(1000))


def test_unschedulable_service():
    tiny = two_cloud_catalog([VmOffer("s", 500, 0.001)])
    with pytest.raises(UnschedulableError, match="unschedulable service"):
        PlacementProblem(chain(mi=1000), tiny, compute_rates(chain(mi=1000)))


def test_fitness_matches_cost_engine_and_is_monotone():
    wf, cat = tiny_instance()
    rates = compute_rates(wf)
    problem = PlacementProblem(wf, cat, rates)
    chrom = problem.random_chromosome(random.Random(2))
    plan = problem.decode(chrom)
    assert fitness(chrom, wf, cat, rates) == pytest.approx(cost_per_second(wf, plan, rates, cat).total)
    # swap in a cheaper offer with equal MIPS
    gene = chrom.genes[0]
    cheaper = tuple(VmOffer(o.name + "-cheap", o.mips, o.price / 2) for o in gene.offers)
    other = Chromosome([type(gene)(gene.cloud, cheaper, sum(o.price for o in cheaper))] + chrom.genes[1:])
    assert fitness(other, wf, cat, rates) < fitness(chrom, wf, cat, rates)


def test_co_located_plan_has_no_transfer():
    wf, cat = tiny_instance()
    rates = compute_rates(wf)
    problem = PlacementProblem(wf, cat, rates)
    rng = random.Random(0)
    chrom = Chromosome([problem.build_gene(i, 0, rng) for i in range(2)])
    plan = problem.decode(chrom)
    assert cost_per_second(wf, plan, rates, cat).transfer_cost == 0


@pytest.mark.parametrize(
    "kw",
    [
        {"crossover_prob": 1.5},
        {"elitism_count": 0},
        {"immigrant_count": 50},
        {"population_size": 1},
    ],
)
def test_bad_params(kw):
    with pytest.raises(ValueError):
        GaParams(**kw).check()
