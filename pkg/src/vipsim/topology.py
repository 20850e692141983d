"""Network graph, link capacities, cache sizes and content-source assignment.

Node ids are dense integers ``0..N-1``.  Capacities are stored in bits/slot and
cache sizes in bits; the text format accepts Mb/slot and bytes respectively.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

MEGABIT = 1_000_000
BYTE = 8


class TopologyParseError(ValueError):
    """Base class for malformed topology files.  ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MissingReverseLinkError(TopologyParseError):
    pass


class NonPositiveCapacityError(TopologyParseError):
    pass


class DuplicateLinkError(TopologyParseError):
    pass


class UnknownNodeError(TopologyParseError):
    pass


@dataclass(frozen=True)
class Catalog:
    """K equal-size data objects, each split into equal chunks."""

    object_count: int
    object_size: float  # bits
    chunks_per_object: int = 1

    def __post_init__(self):
        if self.object_count < 1:
            raise ValueError("catalog needs at least one object")
        if self.object_size <= 0:
            raise ValueError("object size must be positive")
        if self.chunks_per_object < 1:
            raise ValueError("chunks_per_object must be >= 1")

    @property
    def chunk_size(self) -> float:
        return self.object_size / self.chunks_per_object

    @classmethod
    def from_chunk_size(cls, object_count: int, object_size: float, chunk_size: float) -> "Catalog":
        chunks = object_size / chunk_size
        if abs(chunks - round(chunks)) > 1e-9 or round(chunks) < 1:
            raise ValueError(f"object size {object_size} is not a multiple of chunk size {chunk_size}")
        return cls(object_count, object_size, int(round(chunks)))


@dataclass(frozen=True, eq=False)
class Topology:
    """Directed graph with per-link capacity and per-node cache size.

    ``links`` is ordered; every per-link array in the package (capacities,
    forwarding rates, flow estimates) uses this order.  ``sources`` and
    ``allowed`` are optional until objects are attached with
    :meth:`with_sources`.
    """

    num_nodes: int
    links: tuple[tuple[int, int], ...]
    capacity: np.ndarray  # bits/slot, aligned with links
    cache_size: np.ndarray  # bits per node
    sources: np.ndarray | None = None  # src(k) per object
    allowed: np.ndarray | None = None  # L x K bool; None means every link for every object
    name: str = ""
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        index = {link: i for i, link in enumerate(self.links)}
        self._index.update(index)
        if len(index) != len(self.links):
            raise DuplicateLinkError("duplicate directed link")
        for a, b in self.links:
            if (b, a) not in index:
                raise MissingReverseLinkError(f"link ({a},{b}) has no reverse link")
        if np.any(self.capacity <= 0):
            raise NonPositiveCapacityError("capacities must be positive")
        if np.any(self.cache_size < 0):
            raise ValueError("cache sizes must be non-negative")

    # --- basic queries -------------------------------------------------
    @property
    def nodes(self) -> range:
        return range(self.num_nodes)

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def num_objects(self) -> int | None:
        return None if self.sources is None else len(self.sources)

    def link_index(self, a: int, b: int) -> int:
        return self._index[(a, b)]

    def has_link(self, a: int, b: int) -> bool:
        return (a, b) in self._index

    def capacity_of(self, a: int, b: int) -> float:
        return float(self.capacity[self._index[(a, b)]])

    @cached_property
    def link_src(self) -> np.ndarray:
        return np.array([a for a, _ in self.links], dtype=np.intp)

    @cached_property
    def link_dst(self) -> np.ndarray:
        return np.array([b for _, b in self.links], dtype=np.intp)

    @cached_property
    def reverse(self) -> np.ndarray:
        """Index of link (b,a) for each link (a,b)."""
        return np.array([self._index[(b, a)] for a, b in self.links], dtype=np.intp)

    @cached_property
    def reverse_capacity(self) -> np.ndarray:
        return self.capacity[self.reverse]

    @cached_property
    def out_links(self) -> tuple[np.ndarray, ...]:
        out = [[] for _ in self.nodes]
        for i, (a, _) in enumerate(self.links):
            out[a].append(i)
        return tuple(np.array(sorted(o, key=lambda i: self.links[i][1]), dtype=np.intp) for o in out)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(self.link_dst[i]) for i in o) for o in self.out_links)

    def normalized_capacity(self, object_size: float) -> np.ndarray:
        """C_ab / D for every link, in objects per slot."""
        return self.capacity / object_size

    def c_max(self, object_size: float) -> float:
        return float(np.max(self.normalized_capacity(object_size))) if self.num_links else 0.0

    def cache_slots(self, object_size: float) -> np.ndarray:
        """floor(L_n / D): how many whole objects each node can hold."""
        return np.floor(self.cache_size / object_size + 1e-9).astype(np.int64)

    # --- graph distances -----------------------------------------------
    @cached_property
    def hops(self) -> np.ndarray:
        """All-pairs min-hop distance; ``inf`` between disconnected nodes."""
        n = self.num_nodes
        if self.num_links == 0:
            d = np.full((n, n), np.inf)
            np.fill_diagonal(d, 0.0)
            return d
        adj = csr_matrix((np.ones(self.num_links), (self.link_src, self.link_dst)), shape=(n, n))
        return shortest_path(adj, method="D", unweighted=True)

    def is_connected(self) -> bool:
        return bool(np.all(np.isfinite(self.hops)))

    @cached_property
    def next_hop(self) -> np.ndarray:
        """next_hop[u, d]: neighbor of u on a min-hop path to d (lowest id on ties).

        -1 on the diagonal and where d is unreachable.
        """
        n = self.num_nodes
        table = np.full((n, n), -1, dtype=np.intp)
        hops = self.hops
        for u in self.nodes:
            for d in self.nodes:
                if u == d or not np.isfinite(hops[u, d]):
                    continue
                for v in self.neighbors[u]:  # ascending ids
                    if hops[v, d] == hops[u, d] - 1:
                        table[u, d] = v
                        break
        return table

    @cached_property
    def source_list(self) -> list[int]:
        """src(k) as a plain list, for per-packet lookups."""
        if self.sources is None:
            raise ValueError("objects are not attached; call with_sources first")
        return self.sources.tolist()

    @cached_property
    def next_hop_list(self) -> list[list[int]]:
        return self.next_hop.tolist()

    def with_cache_size(self, bits) -> "Topology":
        """Copy with every node's cache set to ``bits`` (scalar or per node)."""
        cache = np.broadcast_to(np.asarray(bits, dtype=float), (self.num_nodes,)).copy()
        return replace(self, cache_size=cache, _index={})

    # --- objects -------------------------------------------------------
    def with_sources(self, sources, allowed: np.ndarray | None = None) -> "Topology":
        sources = np.asarray(sources, dtype=np.intp)
        if sources.ndim != 1 or np.any((sources < 0) | (sources >= self.num_nodes)):
            raise ValueError("source ids must be valid node ids")
        if allowed is not None:
            allowed = np.asarray(allowed, dtype=bool)
            if allowed.shape != (self.num_links, len(sources)):
                raise ValueError("allowed must be an L x K boolean matrix")
        return replace(self, sources=sources, allowed=allowed, _index={})

    def allowed_mask(self) -> np.ndarray:
        if self.sources is None:
            raise ValueError("objects are not attached; call with_sources first")
        if self.allowed is None:
            return np.ones((self.num_links, len(self.sources)), dtype=bool)
        return self.allowed

    def source_mask(self) -> np.ndarray:
        """N x K boolean, True where n = src(k)."""
        if self.sources is None:
            raise ValueError("objects are not attached; call with_sources first")
        mask = np.zeros((self.num_nodes, len(self.sources)), dtype=bool)
        mask[self.sources, np.arange(len(self.sources))] = True
        return mask

    def check_catalog(self, catalog: Catalog) -> None:
        total = catalog.object_count * catalog.object_size
        bad = np.flatnonzero(self.cache_size >= total)
        if bad.size:
            raise ValueError(f"node {bad[0]} can cache the whole catalog (L_n >= K*D)")


def parse_topology(text: str, default_cache_bits: float = 0.0, name: str = "") -> Topology:
    """Parse the plain-text topology format.

    ::

        # comment
        nodes 4
        0 1 500          # undirected edge, both directions at 500 Mb/slot
        link 1 0 250     # directed override of an existing direction
        cache 2 1000000  # cache size of node 2, in bytes
    """
    num_nodes = None
    caps: dict[tuple[int, int], float] = {}
    origin: dict[tuple[int, int], int] = {}
    overridden: set[tuple[int, int]] = set()
    cache: dict[int, float] = {}

    def node_id(tok: str, lineno: int) -> int:
        try:
            v = int(tok)
        except ValueError:
            raise TopologyParseError(f"bad node id {tok!r}", lineno) from None
        if num_nodes is None:
            raise TopologyParseError("'nodes <N>' must come first", lineno)
        if not 0 <= v < num_nodes:
            raise UnknownNodeError(f"unknown node {v}", lineno)
        return v

    def capacity(tok: str, lineno: int) -> float:
        try:
            c = float(tok)
        except ValueError:
            raise TopologyParseError(f"bad capacity {tok!r}", lineno) from None
        if not c > 0:
            raise NonPositiveCapacityError(f"non-positive capacity {tok}", lineno)
        return c * MEGABIT

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if num_nodes is None:
            if tok[0] != "nodes" or len(tok) != 2:
                raise TopologyParseError("first line must be 'nodes <N>'", lineno)
            try:
                num_nodes = int(tok[1])
            except ValueError:
                raise TopologyParseError(f"bad node count {tok[1]!r}", lineno) from None
            if num_nodes < 1:
                raise TopologyParseError("need at least one node", lineno)
            continue
        if tok[0] == "nodes":
            raise TopologyParseError("'nodes' given twice", lineno)
        if tok[0] == "cache":
            if len(tok) != 3:
                raise TopologyParseError("expected 'cache <n> <bytes>'", lineno)
            n = node_id(tok[1], lineno)
            size = float(tok[2])
            if size < 0:
                raise TopologyParseError("negative cache size", lineno)
            cache[n] = size * BYTE
            continue
        if tok[0] == "link":
            if len(tok) != 4:
                raise TopologyParseError("expected 'link <a> <b> <capacity>'", lineno)
            a, b = node_id(tok[1], lineno), node_id(tok[2], lineno)
            if a == b:
                raise TopologyParseError("self loop", lineno)
            if (a, b) in overridden:
                raise DuplicateLinkError(f"duplicate link ({a},{b})", lineno)
            overridden.add((a, b))
            caps[(a, b)] = capacity(tok[3], lineno)
            origin.setdefault((a, b), lineno)
            continue
        if len(tok) != 3:
            raise TopologyParseError("expected '<a> <b> <capacity>'", lineno)
        a, b = node_id(tok[0], lineno), node_id(tok[1], lineno)
        if a == b:
            raise TopologyParseError("self loop", lineno)
        c = capacity(tok[2], lineno)
        if (a, b) in caps or (b, a) in caps:
            raise DuplicateLinkError(f"duplicate link ({a},{b})", lineno)
        caps[(a, b)] = caps[(b, a)] = c
        origin[(a, b)] = origin[(b, a)] = lineno

    if num_nodes is None:
        raise TopologyParseError("empty topology file")
    for (a, b), lineno in origin.items():
        if (b, a) not in caps:
            raise MissingReverseLinkError(f"link ({a},{b}) has no reverse link", lineno)

    links = tuple(sorted(caps))
    cache_bits = np.full(num_nodes, float(default_cache_bits))
    for n, size in cache.items():
        cache_bits[n] = size
    return Topology(
        num_nodes=num_nodes,
        links=links,
        capacity=np.array([caps[l] for l in links], dtype=float),
        cache_size=cache_bits,
        name=name,
    )


def load_topology(path, default_cache_bits: float = 0.0) -> Topology:
    """Read a topology file.  Bare names such as ``"geant"`` resolve to bundled fixtures."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and "/" not in str(path):
        p = resources.files("vipsim") / "data" / f"{path}.txt"
        text = p.read_text()
    else:
        text = p.read_text()
    return parse_topology(text, default_cache_bits, name=Path(str(path)).stem)


def bundled_topologies() -> list[str]:
    return sorted(f.name[:-4] for f in (resources.files("vipsim") / "data").iterdir() if f.name.endswith(".txt"))


def assign_sources(topology: Topology, catalog: Catalog, seed) -> np.ndarray:
    """Draw src(k) independently and uniformly over nodes."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, topology.num_nodes, size=catalog.object_count)
