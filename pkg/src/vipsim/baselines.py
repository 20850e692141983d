"""Comparison policies: shortest-path or potential-based forwarding with classic caches.

The potential-based scheme here is a simplified stand-in: a node's potential
for an object is its hop distance to the nearest known replica, refreshed
periodically, and Interests descend the potential.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .topology import Topology

ALGORITHMS = ("evip", "vip", "sp_lfu", "sp_lce_unif", "sp_lce_lru", "sp_lcd_lru", "sp_lce_bias",
              "potential_random")
CACHING_KINDS = ("LFU", "LCE_UNIF", "LCE_LRU", "LCD_LRU", "LCE_BIAS", "random")
FORWARDING_KINDS = ("shortest_path", "potential_based")


@dataclass(frozen=True)
class BaselinePolicy:
    forwarding: str
    caching: str

    def __post_init__(self):
        if self.forwarding not in FORWARDING_KINDS:
            raise ValueError(f"unknown forwarding kind {self.forwarding!r}")
        if self.caching not in CACHING_KINDS:
            raise ValueError(f"unknown caching kind {self.caching!r}")

    @classmethod
    def from_algorithm(cls, name: str) -> "BaselinePolicy":
        if name == "potential_random":
            return cls("potential_based", "random")
        if not name.startswith("sp_"):
            raise ValueError(f"{name!r} is not a baseline algorithm")
        return cls("shortest_path", name[3:].upper())


# --- content stores ---------------------------------------------------------

class ContentStore:
    """Whole-object cache holding at most ``capacity`` objects."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.objects: set[int] = set()

    def __contains__(self, obj) -> bool:
        return obj in self.objects

    def __len__(self) -> int:
        return len(self.objects)

    def hit(self, obj: int) -> None:
        """Called when a cached copy serves an Interest."""

    def request(self, obj: int) -> None:
        """Called for every Interest for ``obj`` seen at this node."""

    def insert(self, obj: int) -> int | None:
        """Insert ``obj``; return the evicted object, if any."""
        raise NotImplementedError

    def replace_all(self, objs) -> None:
        objs = set(objs)
        if len(objs) > self.capacity:
            raise ValueError("placement exceeds cache capacity")
        self.objects = objs


class LRUStore(ContentStore):
    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._order: OrderedDict[int, None] = OrderedDict()

    def hit(self, obj):
        if obj in self._order:
            self._order.move_to_end(obj)

    def insert(self, obj):
        if self.capacity == 0:
            return None
        if obj in self._order:
            self._order.move_to_end(obj)
            return None
        evicted = None
        if len(self._order) >= self.capacity:
            evicted, _ = self._order.popitem(last=False)
            self.objects.discard(evicted)
        self._order[obj] = None
        self.objects.add(obj)
        return evicted

    @property
    def recency(self) -> list[int]:
        """Least to most recently used."""
        return list(self._order)


class LFUStore(ContentStore):
    """Evicts the cached object with the smallest local request count (lowest id on ties).

    Counts decay by ``decay`` every ``decay_every`` slots when decay is enabled.
    """

    def __init__(self, capacity: int, decay: float | None = 0.99, decay_every: int = 100):
        super().__init__(capacity)
        self.counts: dict[int, float] = {}
        self.decay = decay
        self.decay_every = decay_every

    def request(self, obj):
        self.counts[obj] = self.counts.get(obj, 0.0) + 1.0

    def tick(self, slot: int) -> None:
        if self.decay is not None and slot > 0 and slot % self.decay_every == 0:
            for k in self.counts:
                self.counts[k] *= self.decay

    def insert(self, obj):
        if self.capacity == 0 or obj in self.objects:
            return None
        evicted = None
        if len(self.objects) >= self.capacity:
            evicted = min(self.objects, key=lambda k: (self.counts.get(k, 0.0), k))
            self.objects.discard(evicted)
        self.objects.add(obj)
        return evicted


class RandomStore(ContentStore):
    """Evicts uniformly at random."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        super().__init__(capacity)
        self.rng = rng
        self._items: list[int] = []

    def insert(self, obj):
        if self.capacity == 0 or obj in self.objects:
            return None
        evicted = None
        if len(self._items) >= self.capacity:
            i = int(self.rng.integers(len(self._items)))
            evicted = self._items[i]
            self._items[i] = obj
            self.objects.discard(evicted)
        else:
            self._items.append(obj)
        self.objects.add(obj)
        return evicted


def make_store(kind: str, capacity: int, rng=None, lfu_decay: float | None = 0.99) -> ContentStore:
    if kind in ("LCE_LRU", "LCD_LRU", "LCE_BIAS"):
        return LRUStore(capacity)
    if kind == "LFU":
        return LFUStore(capacity, decay=lfu_decay)
    if kind in ("LCE_UNIF", "random"):
        return RandomStore(capacity, rng)
    if kind == "vip":
        return ContentStore(capacity)
    raise ValueError(f"unknown caching kind {kind!r}")


def baseline_cache_update(store: ContentStore, kind: str, obj: int, hops: int = 1,
                          rng: np.random.Generator | None = None, lce_bias=None,
                          random_insert_prob: float = 0.5) -> None:
    """React to a Data Packet for ``obj`` arriving ``hops`` hops from the node that served it."""
    if kind in ("LCE_LRU", "LCE_UNIF", "LFU"):
        store.insert(obj)
    elif kind == "LCD_LRU":
        if hops == 1:
            store.insert(obj)
    elif kind == "LCE_BIAS":
        p = (lce_bias or lce_bias_probability)(hops)
        if rng.random() < p:
            store.insert(obj)
    elif kind == "random":
        if rng.random() < random_insert_prob:
            store.insert(obj)
    else:
        raise ValueError(f"unknown caching kind {kind!r}")


def lce_bias_probability(hops: int) -> float:
    return 1.0 / (1.0 + hops)


# --- forwarding -------------------------------------------------------------

def shortest_path_forward(topo: Topology, node: int, obj: int) -> int | None:
    """Next hop toward src(obj) on a min-hop path; None when node is the source."""
    src = int(topo.sources[obj])
    if node == src:
        return None
    nh = int(topo.next_hop[node, src])
    if nh < 0:
        raise ValueError(f"no route from {node} to source {src}")
    return nh


class PotentialField:
    """Hop distance to the nearest replica (source or cached copy) of each object."""

    def __init__(self, topo: Topology, refresh: int = 100):
        self.topo = topo
        self.refresh = refresh
        K = len(topo.sources)
        self.holders = topo.source_mask()
        self.potential = topo.hops[:, topo.sources].copy()
        self._last = None
        self._K = K

    def update(self, slot: int, stores) -> None:
        if self._last is not None and slot - self._last < self.refresh:
            return
        self._last = slot
        holders = self.topo.source_mask()
        for n, store in enumerate(stores):
            for k in store.objects:
                holders[n, k] = True
        self.holders = holders
        hops = self.topo.hops
        pot = np.full((self.topo.num_nodes, self._K), np.inf)
        for r in range(self.topo.num_nodes):
            objs = np.flatnonzero(holders[r])
            if objs.size:
                pot[:, objs] = np.minimum(pot[:, objs], hops[:, r:r + 1])
        self.potential = pot

    def next_hop(self, node: int, obj: int, exclude=()) -> int | None:
        best, best_val = None, np.inf
        for v in self.topo.neighbors[node]:
            if v in exclude:
                continue
            p = self.potential[v, obj]
            if p < best_val:
                best, best_val = v, p
        return best
