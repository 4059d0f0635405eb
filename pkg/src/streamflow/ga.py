"""Random-immigrants genetic algorithm for the initial placement plan.

A chromosome holds one gene per service: the placement cloud and the
multiset of VM offers provisioned there.  Every gene is built so that its
capacity covers the service's input rate, and crossover only swaps whole
genes, so every candidate in every generation is feasible.
"""

from __future__ import annotations

import bisect
import itertools
import random
from dataclasses import dataclass, field

import numpy as np

from .cloud import CloudCatalog, VmInstance, VmOffer
from .cost import RateState, SchedulingPlan, edge_transfer_cost, required_units, unit_mips
from .workflow import StreamWorkflow


class UnschedulableError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaParams:
    population_size: int = 50
    generation_limit: int = 50
    elitism_count: int = 1
    crossover_prob: float = 0.8
    mutation_prob: float = 0.3
    immigrant_count: int = 5
    rng_seed: int = 0

    def check(self) -> None:
        if not 0 <= self.crossover_prob <= 1 or not 0 <= self.mutation_prob <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.elitism_count < 1:
            raise ValueError("elitism_count must be >= 1")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 <= self.immigrant_count < self.population_size:
            raise ValueError("immigrant_count must be < population_size")
        if self.immigrant_count > self.population_size - self.elitism_count:
            raise ValueError("immigrants would replace elite candidates")
        if self.generation_limit < 0:
            raise ValueError("generation_limit must be >= 0")


@dataclass(frozen=True)
class Gene:
    cloud: int  # index into catalog.clouds
    offers: tuple[VmOffer, ...]
    price: float


@dataclass
class Chromosome:
    genes: list[Gene]
    fitness: float | None = None


@dataclass
class EvolveResult:
    best: Chromosome
    trace: list[float] = field(default_factory=list)


class PlacementProblem:
    """Precomputed view of one (workflow, catalog, rates) scheduling instance."""

    def __init__(self, workflow: StreamWorkflow, catalog: CloudCatalog, rates: RateState):
        self.workflow = workflow
        self.catalog = catalog
        self.rates = rates
        self.order = workflow.service_ids
        n_clouds = len(catalog.clouds)
        self.need: list[int] = []
        # per service, per cloud: list of (units, price, offer) with mips >= unit MIPS
        self.menu: list[list[list[tuple[int, float, VmOffer]]]] = []
        self.allowed: list[list[int]] = []
        for sid in self.order:
            svc = workflow.service(sid)
            chi = unit_mips(workflow, svc)
            self.need.append(required_units(workflow, rates, sid))
            per_cloud = []
            for c in catalog.clouds:
                per_cloud.append(
                    sorted(
                        ((int(o.mips // chi), o.price, o) for o in c.offers if o.mips >= chi),
                        key=lambda t: (t[0], t[1], t[2].name),
                    )
                )
            self.menu.append(per_cloud)
            if svc.movable:
                allowed = [k for k in range(n_clouds) if per_cloud[k]]
            else:
                k = catalog.index(svc.pinned_cloud)
                allowed = [k] if per_cloud[k] else []
            if not allowed:
                raise UnschedulableError(f"unschedulable service {sid}: no eligible offer")
            self.allowed.append(allowed)

        pos = {sid: i for i, sid in enumerate(self.order)}
        unit = workflow.min_dp_unit
        # one edge-cost table per edge: cost[c_origin][c_dest]
        origins, dests, tables = [], [], []
        for sid in self.order:
            for e in workflow.in_edges(sid):
                if workflow.is_source(e.origin):
                    src_cloud = catalog.index(workflow.source(e.origin).location_cloud)
                    stream = rates.source_units[e.origin] * unit * e.percent
                    origins.append(-1 - src_cloud)
                else:
                    stream = rates.out_stream[e.origin] * e.percent
                    origins.append(pos[e.origin])
                dests.append(pos[sid])
                table = np.zeros((n_clouds, n_clouds))
                for a in range(n_clouds):
                    for b in range(n_clouds):
                        if a != b:
                            table[a, b] = edge_transfer_cost(stream, *catalog.link(
                                catalog.clouds[a].id, catalog.clouds[b].id))
                tables.append(table)
        self._origins = np.array(origins, dtype=int)
        self._dests = np.array(dests, dtype=int)
        self._tables = np.array(tables).reshape(len(tables), n_clouds, n_clouds)
        self._edge_idx = np.arange(len(tables))
        self._src_mask = self._origins < 0
        self._fixed_origin = np.where(self._src_mask, -1 - self._origins, 0)
        self._cand_cache: dict[tuple[int, int, int], list] = {}

    # -- genes ---------------------------------------------------------------

    def build_gene(self, i: int, cloud: int, rng: random.Random) -> Gene:
        """Draw offers from ``cloud`` until service ``i``'s demand is met.

        Offers that fit inside the remaining demand are always candidates.
        Offers that would overshoot are candidates only when no covering
        offer with fewer units is at least as cheap.
        """
        remaining = self.need[i]
        chosen: list[VmOffer] = []
        price = 0.0
        while remaining > 0:
            units, p, offer = rng.choice(self._candidates(i, cloud, remaining))
            chosen.append(offer)
            price += p
            remaining -= units
        return Gene(cloud, tuple(chosen), price)

    def _candidates(self, i: int, cloud: int, remaining: int) -> list:
        key = (i, cloud, remaining)
        cached = self._cand_cache.get(key)
        if cached is None:
            menu = self.menu[i][cloud]
            cached = [m for m in menu if m[0] <= remaining]
            best_cover = float("inf")
            for m in menu:
                if m[0] > remaining and m[1] < best_cover:
                    cached.append(m)
                    best_cover = m[1]
            self._cand_cache[key] = cached
        return cached

    def random_gene(self, i: int, rng: random.Random) -> Gene:
        return self.build_gene(i, rng.choice(self.allowed[i]), rng)

    def random_chromosome(self, rng: random.Random) -> Chromosome:
        return Chromosome([self.random_gene(i, rng) for i in range(len(self.order))])

    # -- fitness -------------------------------------------------------------

    def evaluate(self, population: list[Chromosome]) -> None:
        """Fill in fitness (cents per second) for every unevaluated chromosome."""
        todo = [c for c in population if c.fitness is None]
        if not todo:
            return
        clouds = np.array([[g.cloud for g in c.genes] for c in todo], dtype=int)
        prices = np.array([[g.price for g in c.genes] for c in todo])
        origin_clouds = np.where(
            self._src_mask[None, :], self._fixed_origin[None, :],
            clouds[:, np.where(self._src_mask, 0, self._origins)],
        )
        dest_clouds = clouds[:, self._dests]
        transfer = self._tables[self._edge_idx[None, :], origin_clouds, dest_clouds].sum(axis=1)
        totals = prices.sum(axis=1) + transfer
        for c, f in zip(todo, totals):
            c.fitness = float(f)

    def fitness(self, chromosome: Chromosome) -> float:
        chromosome.fitness = None
        self.evaluate([chromosome])
        return chromosome.fitness

    def decode(
        self,
        chromosome: Chromosome,
        ids: itertools.count | None = None,
        ready_at: int = 0,
    ) -> SchedulingPlan:
        ids = ids if ids is not None else itertools.count()
        plan = SchedulingPlan()
        for sid, gene in zip(self.order, chromosome.genes):
            cid = self.catalog.clouds[gene.cloud].id
            plan.placements[sid] = cid
            plan.provisioned[sid] = [VmInstance(next(ids), o, cid, ready_at) for o in gene.offers]
        return plan

    # -- operators -----------------------------------------------------------

    def crossover(self, a: Chromosome, b: Chromosome, rng: random.Random) -> tuple[Chromosome, Chromosome]:
        n = len(a.genes)
        if n < 2:
            return Chromosome(list(a.genes)), Chromosome(list(b.genes))
        cut = rng.randrange(1, n)
        return (
            Chromosome(a.genes[:cut] + b.genes[cut:]),
            Chromosome(b.genes[:cut] + a.genes[cut:]),
        )

    def mutate(self, c: Chromosome, rng: random.Random) -> Chromosome:
        genes = list(c.genes)
        i = rng.randrange(len(genes))
        cloud = genes[i].cloud
        if len(self.allowed[i]) > 1 and rng.random() < 0.5:
            cloud = rng.choice(self.allowed[i])
        genes[i] = self.build_gene(i, cloud, rng)
        return Chromosome(genes)


def _roulette(population: list[Chromosome], k: int, rng: random.Random) -> list[Chromosome]:
    cumulative = list(itertools.accumulate(1.0 / (1.0 + c.fitness) for c in population))
    total = cumulative[-1]
    return [
        population[min(bisect.bisect_right(cumulative, rng.random() * total), len(population) - 1)]
        for _ in range(k)
    ]


def _sort(population: list[Chromosome]) -> None:
    population.sort(key=lambda c: c.fitness)


def evolve(problem: PlacementProblem, params: GaParams) -> EvolveResult:
    """Run the generational loop and return the elite plus its fitness per generation."""
    params.check()
    rng = random.Random(params.rng_seed)
    size = params.population_size
    population = [problem.random_chromosome(rng) for _ in range(size)]
    problem.evaluate(population)
    _sort(population)
    trace = [population[0].fitness]
    for _ in range(params.generation_limit):
        elite = population[: params.elitism_count]
        # immigrants take the places of the worst candidates
        keep = size - params.immigrant_count
        immigrants = [problem.random_chromosome(rng) for _ in range(params.immigrant_count)]
        problem.evaluate(immigrants)
        population = population[:keep] + immigrants

        parents = _roulette(population, size - params.elitism_count, rng)
        offspring: list[Chromosome] = []
        for j in range(0, len(parents), 2):
            a = parents[j]
            b = parents[j + 1] if j + 1 < len(parents) else parents[0]
            if rng.random() < params.crossover_prob:
                a, b = problem.crossover(a, b, rng)
            offspring.extend([a, b])
        offspring = offspring[: size - params.elitism_count]
        for j, child in enumerate(offspring):
            if rng.random() < params.mutation_prob:
                offspring[j] = problem.mutate(child, rng)
        population = list(elite) + offspring
        problem.evaluate(population)
        _sort(population)
        trace.append(population[0].fitness)
    return EvolveResult(population[0], trace)


def random_chromosome(
    workflow: StreamWorkflow, catalog: CloudCatalog, rates: RateState, seed: int
) -> Chromosome:
    return PlacementProblem(workflow, catalog, rates).random_chromosome(random.Random(seed))


def fitness(
    chromosome: Chromosome, workflow: StreamWorkflow, catalog: CloudCatalog, rates: RateState
) -> float:
    return PlacementProblem(workflow, catalog, rates).fitness(chromosome)


def schedule(
    workflow: StreamWorkflow,
    catalog: CloudCatalog,
    rates: RateState,
    params: GaParams = GaParams(),
    ids: itertools.count | None = None,
    ready_at: int = 0,
) -> tuple[SchedulingPlan, EvolveResult]:
    """Evolve a plan for the given steady-state rates and decode it."""
    problem = PlacementProblem(workflow, catalog, rates)
    result = evolve(problem, params)
    return problem.decode(result.best, ids, ready_at), result
