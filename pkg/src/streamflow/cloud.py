"""Multicloud system model: clouds, VM offers, instances and network matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

CATALOG_FORMAT_VERSION = 1
DEFAULT_CATALOG_NAME = "multicloud-default"


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class VmOffer:
    name: str
    mips: float
    price: float  # cents per second
    boot_time: float = 0.0  # seconds
    interpolated: bool = False

    def units_for(self, unit_mips: float) -> int:
        """Whole stream units per second this offer sustains for a service."""
        return int(self.mips // unit_mips)


@dataclass(frozen=True)
class Cloud:
    id: str
    offers: tuple[VmOffer, ...]

    def offer(self, name: str) -> VmOffer:
        for o in self.offers:
            if o.name == name:
                return o
        raise CatalogError(f"cloud {self.id!r} has no offer {name!r}")


@dataclass(frozen=True)
class VmInstance:
    global_id: int
    offer: VmOffer
    cloud: str
    ready_at: int = 0

    def is_ready(self, now: int | None) -> bool:
        return now is None or now >= self.ready_at


@dataclass(frozen=True)
class NetworkRanges:
    """Sampling ranges for network matrices (defaults follow the experiment table)."""

    ingress_bandwidth: tuple[float, float] = (615.0, 926.0)
    ingress_latency: tuple[float, float] = (0.00064, 0.00086)
    egress_bandwidth: tuple[float, float] = (122.0, 218.0)
    egress_latency: tuple[float, float] = (0.021, 0.031)
    egress_cost: tuple[float, float] = (0.013, 0.019)
    ingress_cost: tuple[float, float] = (0.0, 0.0)

    def check(self) -> None:
        for name in (
            "ingress_bandwidth",
            "ingress_latency",
            "egress_bandwidth",
            "egress_latency",
            "egress_cost",
            "ingress_cost",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise CatalogError(f"range {name}: min {lo} > max {hi}")

    def to_document(self) -> dict[str, list[float]]:
        return {k: list(v) for k, v in self.__dict__.items()}

    @classmethod
    def from_document(cls, doc: dict[str, Sequence[float]]) -> "NetworkRanges":
        return cls(**{k: tuple(v) for k, v in doc.items()})


Matrix = tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class CloudCatalog:
    clouds: tuple[Cloud, ...]
    latency: Matrix
    bandwidth: Matrix
    transfer_cost: Matrix
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "clouds", tuple(self.clouds))
        for name in ("latency", "bandwidth", "transfer_cost"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))
        object.__setattr__(self, "_pos", {c.id: i for i, c in enumerate(self.clouds)})

    @property
    def cloud_ids(self) -> list[str]:
        return [c.id for c in self.clouds]

    def cloud(self, cid: str) -> Cloud:
        try:
            return self.clouds[self._pos[cid]]
        except KeyError:
            raise CatalogError(f"unknown cloud {cid!r}") from None

    def index(self, cid: str) -> int:
        try:
            return self._pos[cid]
        except KeyError:
            raise CatalogError(f"unknown cloud {cid!r}") from None

    def link(self, a: str, b: str) -> tuple[float, float, float]:
        """(latency, bandwidth, transfer cost) from cloud a to cloud b."""
        i, j = self.index(a), self.index(b)
        return self.latency[i][j], self.bandwidth[i][j], self.transfer_cost[i][j]

    def all_offers(self) -> list[tuple[str, VmOffer]]:
        return [(c.id, o) for c in self.clouds for o in c.offers]

    @property
    def max_boot_time(self) -> float:
        return max(o.boot_time for _, o in self.all_offers())


def _as_matrix(rows) -> Matrix:
    return tuple(tuple(float(v) for v in row) for row in rows)


def check_catalog(catalog: CloudCatalog) -> None:
    n = len(catalog.clouds)
    if n == 0:
        raise CatalogError("catalog must contain at least one cloud")
    ids = catalog.cloud_ids
    if len(set(ids)) != n:
        raise CatalogError("duplicate cloud ids")
    for c in catalog.clouds:
        if not c.offers:
            raise CatalogError(f"cloud {c.id}: cloud must have >=1 offer")
        for o in c.offers:
            if not o.mips > 0:
                raise CatalogError(f"cloud {c.id} offer {o.name}: mips must be > 0")
            if not o.price > 0:
                raise CatalogError(f"cloud {c.id} offer {o.name}: price must be > 0")
            if o.boot_time < 0:
                raise CatalogError(f"cloud {c.id} offer {o.name}: boot_time must be >= 0")
    for name in ("latency", "bandwidth", "transfer_cost"):
        m = getattr(catalog, name)
        if len(m) != n or any(len(row) != n for row in m):
            raise CatalogError(f"{name}: matrix must be {n}x{n}")
    for i in range(n):
        if catalog.latency[i][i] != 0:
            raise CatalogError("latency: diagonal must be 0")
        if catalog.transfer_cost[i][i] != 0:
            raise CatalogError("transfer_cost: diagonal must be 0")
    if any(v <= 0 for row in catalog.bandwidth for v in row):
        raise CatalogError("bandwidth: all entries must be > 0")


def sample_network(
    ranges: NetworkRanges, n_clouds: int, seed: int
) -> tuple[Matrix, Matrix, Matrix]:
    """Draw symmetric latency/bandwidth/transfer-cost matrices from ``ranges``.

    Off-diagonal links use the egress ranges.  Diagonal entries describe
    traffic inside one cloud: bandwidth is drawn from the ingress range,
    while latency and transfer cost are 0 so co-located services exchange
    data for free.
    """
    ranges.check()
    rng = np.random.default_rng(seed)
    lat = np.zeros((n_clouds, n_clouds))
    bw = np.zeros((n_clouds, n_clouds))
    cost = np.zeros((n_clouds, n_clouds))
    for i in range(n_clouds):
        bw[i, i] = rng.uniform(*ranges.ingress_bandwidth)
        for j in range(i + 1, n_clouds):
            lat[i, j] = lat[j, i] = rng.uniform(*ranges.egress_latency)
            bw[i, j] = bw[j, i] = rng.uniform(*ranges.egress_bandwidth)
            cost[i, j] = cost[j, i] = rng.uniform(*ranges.egress_cost)
    return _as_matrix(lat), _as_matrix(bw), _as_matrix(cost)


def sample_boot_times(n: int, boot_range: tuple[float, float], seed: int) -> list[int]:
    rng = np.random.default_rng(seed)
    lo, hi = boot_range
    return [int(v) for v in rng.integers(int(lo), int(hi), size=n, endpoint=True)]


# -- documents -----------------------------------------------------------


def to_document(catalog: CloudCatalog) -> dict[str, Any]:
    doc = {
        "format_version": CATALOG_FORMAT_VERSION,
        "clouds": [
            {
                "id": c.id,
                "offers": [
                    {
                        "name": o.name,
                        "mips": o.mips,
                        "price": o.price,
                        "boot_time": o.boot_time,
                        **({"interpolated": True} if o.interpolated else {}),
                    }
                    for o in c.offers
                ],
            }
            for c in catalog.clouds
        ],
        "latency": [list(r) for r in catalog.latency],
        "bandwidth": [list(r) for r in catalog.bandwidth],
        "transfer_cost": [list(r) for r in catalog.transfer_cost],
    }
    if catalog.meta:
        doc["meta"] = catalog.meta
    return doc


def load_catalog(doc: dict[str, Any]) -> CloudCatalog:
    """Build and validate a catalog from a parsed document.

    Network matrices may be given inline or generated from a ``network``
    block holding sampling ``ranges`` and a ``seed``.
    """
    if not isinstance(doc, dict):
        raise CatalogError("catalog document must be a mapping")
    if doc.get("format_version") != CATALOG_FORMAT_VERSION:
        raise CatalogError(f"unsupported catalog format_version {doc.get('format_version')!r}")
    try:
        clouds = [
            Cloud(c["id"], tuple(VmOffer(**o) for o in c["offers"])) for c in doc["clouds"]
        ]
    except (KeyError, TypeError) as exc:
        raise CatalogError(f"catalog schema violation: {exc}") from exc
    meta = dict(doc.get("meta", {}))
    if "latency" in doc:
        try:
            lat, bw, cost = doc["latency"], doc["bandwidth"], doc["transfer_cost"]
        except KeyError as exc:
            raise CatalogError(f"catalog schema violation: missing {exc}") from exc
    elif "network" in doc:
        net = doc["network"]
        ranges = NetworkRanges.from_document(net.get("ranges", {}))
        lat, bw, cost = sample_network(ranges, len(clouds), int(net["seed"]))
        meta["network"] = {"ranges": ranges.to_document(), "seed": int(net["seed"])}
    else:
        raise CatalogError("catalog schema violation: no network matrices or network block")
    catalog = CloudCatalog(clouds, lat, bw, cost, meta)
    check_catalog(catalog)
    return catalog


def load_catalog_file(path: str | Path) -> CloudCatalog:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"catalog not found: {p}")
    return load_catalog(json.loads(p.read_text()))


def dumps(catalog: CloudCatalog) -> str:
    return json.dumps(to_document(catalog), indent=2, sort_keys=True) + "\n"


def default_catalog() -> CloudCatalog:
    text = resources.files("streamflow.catalog").joinpath(f"{DEFAULT_CATALOG_NAME}.json").read_text()
    return load_catalog(json.loads(text))


# Provider VM tables: (name, total MIPS, cents/second).  m4.4xlarge has no
# published price; it is filled in at twice m4.2xlarge and flagged.
AMAZON_OFFERS = [
    ("m4.large", 7000, 0.0054),
    ("m4.xlarge", 13000, 0.0107),
    ("m4.2xlarge", 26000, 0.0214),
    ("m4.4xlarge", 54000, None),
    ("m4.10xlarge", 125000, 0.1067),
    ("m4.16xlarge", 188000, 0.1707),
    ("c4.large", 8000, 0.0054),
    ("c4.xlarge", 16000, 0.0107),
    ("c4.2xlarge", 31000, 0.0213),
    ("c4.4xlarge", 62000, 0.0426),
    ("c4.8xlarge", 132000, 0.0859),
]
GOOGLE_OFFERS = [
    ("n1-standard-1", 2750, 0.0014),
    ("n1-standard-2", 5500, 0.0027),
    ("n1-standard-4", 11000, 0.0053),
    ("n1-standard-8", 22000, 0.0106),
    ("n1-standard-16", 44000, 0.0212),
    ("n1-standard-32", 88000, 0.0423),
    ("n1-standard-64", 176000, 0.0845),
    ("n1-highcpu-2", 5500, 0.002),
    ("n1-highcpu-4", 11000, 0.004),
    ("n1-highcpu-8", 22000, 0.0079),
    ("n1-highcpu-16", 44000, 0.0158),
    ("n1-highcpu-32", 88000, 0.0316),
    ("n1-highcpu-64", 176000, 0.0631),
]
AZURE_OFFERS = [
    ("D1 v2", 2500, 0.0035),
    ("D2 v2", 5000, 0.0069),
    ("D3 v2", 10000, 0.0137),
    ("D4 v2", 20000, 0.0274),
    ("D5 v2", 40000, 0.052),
    ("D2 v3", 5000, 0.0054),
    ("D4 v3", 10000, 0.0107),
    ("D8 v3", 20000, 0.0214),
    ("D16 v3", 40000, 0.0427),
    ("D32 v3", 80000, 0.0854),
    ("D64 v3", 160000, 0.1707),
    ("F1", 2500, 0.0027),
    ("F2", 5000, 0.0054),
    ("F4", 10000, 0.0107),
    ("F8", 20000, 0.0213),
    ("F16", 40000, 0.0426),
]
M4_4XLARGE_PRICE = 0.0427


def build_default_catalog(
    boot_range: tuple[float, float] = (30, 100),
    boot_seed: int = 2019,
    network_seed: int = 2019,
    ranges: NetworkRanges | None = None,
) -> CloudCatalog:
    """Assemble the three-provider catalog used by the experiments."""
    ranges = ranges or NetworkRanges()
    tables = [("amazon", AMAZON_OFFERS), ("google", GOOGLE_OFFERS), ("azure", AZURE_OFFERS)]
    clouds = []
    for k, (cid, rows) in enumerate(tables):
        boots = sample_boot_times(len(rows), boot_range, boot_seed + k)
        offers = []
        for (name, mips, price), boot in zip(rows, boots):
            offers.append(
                VmOffer(
                    name=name,
                    mips=float(mips),
                    price=M4_4XLARGE_PRICE if price is None else price,
                    boot_time=float(boot),
                    interpolated=price is None,
                )
            )
        clouds.append(Cloud(cid, tuple(offers)))
    lat, bw, cost = sample_network(ranges, len(clouds), network_seed)
    meta = {
        "boot_time": {"range": list(boot_range), "seed": boot_seed},
        "network": {"ranges": ranges.to_document(), "seed": network_seed},
    }
    catalog = CloudCatalog(clouds, lat, bw, cost, meta)
    check_catalog(catalog)
    return catalog
