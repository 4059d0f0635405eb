"""Synthetic stream workflows shaped like the classic scientific workflows.

Each builder lays out the layered fan-in/fan-out pattern of its namesake
(Montage, Inspiral, Epigenomics, CyberShake) with exactly the requested
node count.  Per-service parameters are then sampled from a seeded RNG.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .workflow import (
    MOVABLE,
    REPLICA,
    UNMOVABLE,
    Edge,
    ExternalSource,
    Service,
    StreamWorkflow,
)

SIZES = {
    "montage": {"small": 25, "medium": 50, "large": 100},
    "inspiral": {"small": 30, "medium": 50, "large": 100},
    "epigenomics": {"small": 24, "medium": 46, "large": 100},
    "cybershake": {"small": 30, "medium": 50, "large": 100},
}
DISPLAY = {
    "montage": "Montage",
    "inspiral": "Inspiral",
    "epigenomics": "Epigenomics",
    "cybershake": "CyberShake",
}
DEFAULT_CLOUDS = ("amazon", "google", "azure")


@dataclass(frozen=True)
class ParameterRanges:
    mi_per_mb: tuple[float, float] = (1348.0, 2674.0)
    gamma: tuple[float, float] = (0.01, 0.50)
    unmovable_fraction: float = 0.5
    source_rate: float = 5.0
    min_dp_unit: float = 1.0
    unit_dp_rate: float = 1.0


class _Shape:
    """Node list plus edges; ``feeds`` maps source index -> fed nodes."""

    def __init__(self):
        self.nodes: list[str] = []
        self.edges: list[tuple[str, str]] = []
        self.feeds: list[list[str]] = []

    def add(self, name: str) -> str:
        self.nodes.append(name)
        return name

    def link(self, a: str, b: str) -> None:
        self.edges.append((a, b))


def _montage(n_nodes: int) -> _Shape:
    n_proj = max(2, round((n_nodes - 6) / 3.8))
    n_diff = n_nodes - 2 * n_proj - 6
    while n_diff < 1 or n_diff > n_proj * (n_proj - 1) // 2:
        n_proj += -1 if n_diff < 1 else 1
        n_diff = n_nodes - 2 * n_proj - 6
        if n_proj < 2:
            raise ValueError(f"montage needs at least 11 nodes, got {n_nodes}")
    g = _Shape()
    proj = [g.add(f"mProjectPP_{i:02d}") for i in range(n_proj)]
    # overlapping neighbours first, then wider strides
    pairs = [(i, i + k) for k in range(1, n_proj) for i in range(n_proj - k)][:n_diff]
    diffs = []
    for j, (a, b) in enumerate(pairs):
        d = g.add(f"mDiffFit_{j:02d}")
        g.link(proj[a], d)
        g.link(proj[b], d)
        diffs.append(d)
    concat = g.add("mConcatFit")
    for d in diffs:
        g.link(d, concat)
    bg_model = g.add("mBgModel")
    g.link(concat, bg_model)
    table = g.add("mImgTbl")
    add = g.add("mAdd")
    for i, p in enumerate(proj):
        bg = g.add(f"mBackground_{i:02d}")
        g.link(p, bg)
        g.link(bg_model, bg)
        g.link(bg, table)
        g.link(bg, add)
    g.link(table, add)
    shrink = g.add("mShrink")
    g.link(add, shrink)
    g.link(shrink, g.add("mJPEG"))
    g.feeds = [[p] for p in proj]
    return g


def _inspiral(n_nodes: int) -> _Shape:
    groups = max(2, n_nodes // 50)
    extra = (n_nodes - 2 * groups) % 2
    pairs = (n_nodes - 2 * groups - extra) // 2
    if pairs < 2 * groups:
        raise ValueError(f"inspiral needs more nodes than {n_nodes}")
    n_bank = math.ceil(pairs / 2)
    n_trig = pairs - n_bank
    g = _Shape()
    banks = [n_bank // groups + (1 if k < n_bank % groups else 0) for k in range(groups)]
    trigs = [n_trig // groups + (1 if k < n_trig % groups else 0) for k in range(groups)]
    finals = []
    idx = 0
    for k in range(groups):
        thinca = None
        inspirals = []
        for _ in range(banks[k]):
            bank = g.add(f"TmpltBank_{idx:02d}")
            insp = g.add(f"Inspiral_{idx:02d}")
            g.link(bank, insp)
            # both jobs read the raw detector stream
            g.feeds.append([bank, insp])
            inspirals.append(insp)
            idx += 1
        thinca = g.add(f"Thinca_{k}")
        for insp in inspirals:
            g.link(insp, thinca)
        second = g.add(f"Thinca2_{k}")
        for t in range(trigs[k]):
            trig = g.add(f"TrigBank_{k}_{t:02d}")
            insp2 = g.add(f"Inspiral2_{k}_{t:02d}")
            g.link(thinca, trig)
            g.link(trig, insp2)
            g.link(insp2, second)
        finals.append(second)
    if extra:
        summary = g.add("Summary")
        for f in finals:
            g.link(f, summary)
    return g


def _epigenomics(n_nodes: int) -> _Shape:
    lanes = 1 if n_nodes < 40 else 2 if n_nodes < 80 else 3
    fixed = 2 * lanes + 3
    chain_nodes = n_nodes - fixed
    if chain_nodes < lanes:
        raise ValueError(f"epigenomics needs more nodes than {n_nodes}")
    steps = ("filterContams", "sol2sanger", "fastq2bfq", "map")
    g = _Shape()
    splits = [g.add(f"fastQSplit_{l}") for l in range(lanes)]
    merges = [g.add(f"mapMerge_{l}") for l in range(lanes)]
    n_chains = math.ceil(chain_nodes / len(steps))
    lengths = [len(steps)] * (chain_nodes // len(steps))
    if chain_nodes % len(steps):
        lengths.append(chain_nodes % len(steps))
    for c in range(n_chains):
        lane = c % lanes
        prev = splits[lane]
        for step in steps[len(steps) - lengths[c]:]:
            node = g.add(f"{step}_{c:02d}")
            g.link(prev, node)
            prev = node
        g.link(prev, merges[lane])
    merge_all = g.add("mapMergeAll")
    for m in merges:
        g.link(m, merge_all)
    index = g.add("maqIndex")
    g.link(merge_all, index)
    g.link(index, g.add("pileup"))
    g.feeds = [[s] for s in splits]
    return g


def _cybershake(n_nodes: int) -> _Shape:
    sites = 2 if n_nodes < 80 else 4
    rest = n_nodes - sites - 2
    if rest < 2:
        raise ValueError(f"cybershake needs more nodes than {n_nodes}")
    n_seis = math.ceil(rest / 2)
    n_peak = rest - n_seis
    g = _Shape()
    extract = [g.add(f"ExtractSGT_{k}") for k in range(sites)]
    zip_seis = g.add("ZipSeis")
    zip_psa = g.add("ZipPSA")
    for s in range(n_seis):
        seis = g.add(f"SeismogramSynthesis_{s:02d}")
        g.link(extract[s % sites], seis)
        g.link(seis, zip_seis)
        if s < n_peak:
            peak = g.add(f"PeakValCalcOkaya_{s:02d}")
            g.link(seis, peak)
            g.link(peak, zip_psa)
    g.feeds = [[e] for e in extract]
    return g


_BUILDERS = {
    "montage": _montage,
    "inspiral": _inspiral,
    "epigenomics": _epigenomics,
    "cybershake": _cybershake,
}


def node_count(structure: str, size: str) -> int:
    try:
        return SIZES[structure][size]
    except KeyError:
        raise ValueError(f"unknown structure/size {structure!r}/{size!r}") from None


def workflow_name(structure: str, n_nodes: int) -> str:
    return f"{DISPLAY[structure]}_{n_nodes}"


def generate(
    structure: str,
    n_nodes: int,
    seed: int,
    clouds: tuple[str, ...] = DEFAULT_CLOUDS,
    params: ParameterRanges = ParameterRanges(),
) -> StreamWorkflow:
    """Build a stream workflow with ``n_nodes`` services of the given shape."""
    if structure not in _BUILDERS:
        raise ValueError(f"unknown structure {structure!r}")
    shape = _BUILDERS[structure](n_nodes)
    assert len(shape.nodes) == n_nodes, (structure, n_nodes, len(shape.nodes))
    rng = random.Random(seed)

    sources = []
    fed_by: dict[str, str] = {}
    for k, fed in enumerate(shape.feeds):
        loc = rng.choice(clouds)
        sources.append(ExternalSource(f"ex_{k:02d}", params.source_rate, loc))
        for node in fed:
            fed_by.setdefault(node, loc)

    n_unmovable = round(params.unmovable_fraction * n_nodes)
    unmovable = set(rng.sample(shape.nodes, n_unmovable))
    services = []
    for node in shape.nodes:
        mi = round(rng.uniform(*params.mi_per_mb), 2)
        gamma = round(rng.uniform(*params.gamma), 4)
        if node in unmovable:
            pinned = fed_by.get(node) or rng.choice(clouds)
            services.append(Service(node, mi, gamma, UNMOVABLE, pinned))
        else:
            services.append(Service(node, mi, gamma, MOVABLE, None))

    edges = [Edge(a, b, 1.0, REPLICA) for a, b in shape.edges]
    for src, fed in zip(sources, shape.feeds):
        edges.extend(Edge(src.id, node, 1.0, REPLICA) for node in fed)

    return StreamWorkflow(
        services=services,
        external_sources=sources,
        edges=edges,
        min_dp_unit=params.min_dp_unit,
        unit_dp_rate=params.unit_dp_rate,
        name=workflow_name(structure, n_nodes),
    )


def generate_named(structure: str, size: str, seed: int, **kw) -> StreamWorkflow:
    return generate(structure, node_count(structure, size), seed, **kw)


def evaluation_workflows(seed: int, **kw) -> list[StreamWorkflow]:
    """The twelve evaluation workflows (four structures x three sizes)."""
    return [
        generate(structure, n, seed, **kw)
        for size in ("small", "medium", "large")
        for structure, sizes in SIZES.items()
        for n in [sizes[size]]
    ]
