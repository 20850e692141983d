"""Packet-level plane: Interests, Data Packets, PITs and content stores.

Links are slotted: each directed link sends at most floor(C / packet size)
packets of each type per slot from FIFO queues, and a packet sent in slot t
is processed by the receiver in slot t+1.  Interests remember the nodes they
visited so forwarding never walks straight back into its own path; an
origin re-expresses an unanswered request along the shortest path after
``interest_timeout`` slots, which also unblocks PIT entries that ended up
waiting on each other.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .baselines import ContentStore, PotentialField, baseline_cache_update
from .topology import Catalog, Topology

LOCAL = -1


class Interest:
    __slots__ = ("obj", "chunk", "origin", "created", "visited", "retx")

    def __init__(self, obj, chunk, origin, created, visited=(), retx=False):
        self.obj = obj
        self.chunk = chunk
        self.origin = origin
        self.created = created
        self.visited = visited
        self.retx = retx

    @property
    def is_first_chunk(self) -> bool:
        return self.chunk == 0


class DataPacket:
    __slots__ = ("obj", "chunk", "hops")

    def __init__(self, obj, chunk, hops=0):
        self.obj = obj
        self.chunk = chunk
        self.hops = hops


class Request:
    """One exogenous request: every chunk of one object, issued at ``created``."""

    __slots__ = ("origin", "obj", "created", "remaining", "done")

    def __init__(self, origin, obj, created, chunks):
        self.origin = origin
        self.obj = obj
        self.created = created
        self.remaining = set(range(chunks))
        self.done = False


@dataclass
class PitEntry:
    faces: set = field(default_factory=set)  # neighbor ids awaiting the Data
    requests: list = field(default_factory=list)  # local Requests awaiting the Data
    upstream: set = field(default_factory=set)  # neighbors the Interest was sent to

    def __bool__(self):
        return bool(self.faces or self.requests)


class PitTable:
    """Per-node map (object, chunk) -> PitEntry."""

    def __init__(self, num_nodes: int):
        self.tables: list[dict] = [dict() for _ in range(num_nodes)]

    def __getitem__(self, node) -> dict:
        return self.tables[node]

    def pending(self, node, obj, chunk) -> bool:
        return (obj, chunk) in self.tables[node]

    def size(self) -> int:
        return sum(len(t) for t in self.tables)


class Action(NamedTuple):
    kind: str  # "serve" | "suppress" | "forward" | "unroutable"
    next_hop: int | None = None


SERVE = Action("serve")
SUPPRESS = Action("suppress")


@dataclass
class PlaneCounters:
    stale: int = 0
    unroutable: int = 0
    retransmissions: int = 0
    cache_hits: int = 0
    source_hits: int = 0


class FlowEstimate:
    """Sliding-window (or exponentially weighted) average of per-link VIP flow.

    Feed it the VIPs actually moved over each link in a slot (L x K).  The
    window variant keeps a ring buffer and re-sums it once per window so
    add/subtract rounding cannot accumulate.
    """

    def __init__(self, topo: Topology, num_objects: int, window: int = 100, mode: str = "window",
                 decay: float | None = None):
        if window < 1:
            raise ValueError("flow window must be >= 1")
        if mode not in ("window", "exponential"):
            raise ValueError(f"unknown flow estimate mode {mode!r}")
        self.topo = topo
        self.window = window
        self.mode = mode
        L, K = topo.num_links, num_objects
        self.decay = decay if decay is not None else 1.0 - 1.0 / window
        self._buf = np.zeros((window if mode == "window" else 1, L, K))
        self._sum = np.zeros((L, K))
        self._pos = 0
        self._filled = 0
        self._allowed = topo.allowed_mask()
        # padded out-link table for per-node argmax; column L is a dummy link
        deg = max((len(o) for o in topo.out_links), default=0)
        pad = np.full((topo.num_nodes, max(deg, 1)), L, dtype=np.intp)
        for n, o in enumerate(topo.out_links):
            pad[n, :len(o)] = o
        self._pad = pad
        self.best_link = np.full((topo.num_nodes, K), -1, dtype=np.intp)
        self.best_value = np.zeros((topo.num_nodes, K))
        self._best_hop = [[-1] * K for _ in range(topo.num_nodes)]
        self._values = np.zeros((L, K))

    def update(self, flow: np.ndarray) -> None:
        flow = np.asarray(flow, dtype=float)
        if self.mode == "window":
            self._sum += flow - self._buf[self._pos]
            self._buf[self._pos] = flow
            self._pos = (self._pos + 1) % self.window
            self._filled = min(self._filled + 1, self.window)
            if self._pos == 0:
                self._sum = self._buf.sum(axis=0)
            vals = self._sum / self._filled
            vals[vals < 1e-9] = 0.0
            self._values = vals
        else:
            self._values = self.decay * self._values + (1.0 - self.decay) * flow
        self._refresh_best()

    @property
    def values(self) -> np.ndarray:
        """Average VIP flow per link and object (objects/slot)."""
        return self._values

    def _refresh_best(self) -> None:
        est = np.where(self._allowed, self._values, -1.0)
        est = np.vstack([est, np.full((1, est.shape[1]), -1.0)])
        per_node = est[self._pad]  # N x deg x K
        idx = np.argmax(per_node, axis=1)  # neighbors are sorted by id, so ties pick the lowest
        self.best_value = np.take_along_axis(per_node, idx[:, None, :], axis=1)[:, 0, :]
        self.best_link = np.take_along_axis(self._pad, idx, axis=1)
        dst = np.append(self.topo.link_dst, -1)
        self._best_hop = np.where(self.best_value > 0, dst[self.best_link], -1).tolist()

    def best_next_hop(self, node: int, obj: int, exclude=()) -> int | None:
        """Neighbor with the largest positive estimate for ``obj``, skipping ``exclude``."""
        v = self._best_hop[node][obj]
        if v < 0:
            return None
        if v not in exclude:
            return v
        vals = self._values
        best, best_val = None, 0.0
        for l in self.topo.out_links[node]:
            v = int(self.topo.link_dst[l])
            if v in exclude or not self._allowed[l, obj]:
                continue
            e = vals[l, obj]
            if e > best_val:
                best, best_val = v, e
        return best


def shortest_path_fallback(topo: Topology, node: int, obj: int, exclude=()) -> int | None:
    """Min-hop next hop toward src(obj), avoiding ``exclude`` when an alternative exists."""
    src = topo.source_list[obj]
    nh = topo.next_hop_list[node][src]
    if nh < 0:
        return None
    if nh not in exclude:
        return nh
    hops = topo.hops
    best, best_d = None, np.inf
    for v in topo.neighbors[node]:
        if v not in exclude and hops[v, src] < best_d:
            best, best_d = v, hops[v, src]
    return best if best is not None else nh


def waits_on(pit: PitTable, node: int, target: int, key) -> bool:
    """True if ``node``'s entry for ``key`` transitively waits on ``target``.

    Follows upstream pointers through pending entries.  Merging an Interest
    from ``target`` into such an entry would leave both waiting on each other.
    """
    stack, seen = [node], {node}
    while stack:
        entry = pit[stack.pop()].get(key)
        if entry is None:
            continue
        for up in entry.upstream:
            if up == target:
                return True
            if up not in seen:
                seen.add(up)
                stack.append(up)
    return False


def forward_interest(pkt: Interest, node: int, stores, pit: PitTable, flow, topo: Topology,
                     face: int = LOCAL) -> Action:
    """Decide what ``node`` does with an Interest arriving from ``face``.

    ``flow`` is a FlowEstimate, a PotentialField, or None for plain
    shortest-path forwarding.  A pending entry suppresses the Interest unless
    it is a retransmission or merging would close a wait cycle (see
    :func:`waits_on`); both are re-forwarded along the shortest path.  PIT
    state is not modified.
    """
    obj = pkt.obj
    if node == topo.source_list[obj] or obj in stores[node]:
        return SERVE
    entry = pit[node].get((obj, pkt.chunk))
    exclude = pkt.visited
    crossed = entry is not None and not pkt.retx and face != LOCAL and waits_on(pit, node, face, (obj, pkt.chunk))
    if entry is not None and not pkt.retx and not crossed:
        return SUPPRESS
    if crossed:
        exclude = exclude + tuple(entry.upstream)
    if pkt.retx or crossed or flow is None:
        nh = shortest_path_fallback(topo, node, obj, exclude)
    elif isinstance(flow, PotentialField):
        nh = flow.next_hop(node, obj, exclude)
        if nh is None or flow.potential[nh, obj] == np.inf:
            nh = shortest_path_fallback(topo, node, obj, exclude)
    else:
        nh = flow.best_next_hop(node, obj, exclude)
        if nh is None:
            nh = shortest_path_fallback(topo, node, obj, exclude)
    if nh is None:
        return Action("unroutable")
    return Action("forward", nh)


def handle_data_arrival(data: DataPacket, node: int, pit: PitTable, counters: PlaneCounters):
    """Consume the PIT entry for ``data`` at ``node``.

    Returns ``(faces, requests)``: neighbors that get a copy next slot and
    local Requests that receive this chunk.  Stale Data is dropped.
    """
    entry = pit[node].pop((data.obj, data.chunk), None)
    if entry is None:
        counters.stale += 1
        return (), ()
    return sorted(entry.faces), entry.requests


def update_content_stores(selection: np.ndarray, stores, strict: bool = False,
                          last_seen: np.ndarray | None = None, slot: int | None = None,
                          window: int = 100) -> None:
    """Make each node's store hold the objects chosen by the virtual-plane caching decision.

    In strict mode an object not already stored is placed only if a Data
    Packet for it passed the node within the last ``window`` slots; the
    freed room keeps previously stored objects.
    """
    for n, store in enumerate(stores):
        chosen = np.flatnonzero(selection[n])
        if not strict:
            if len(chosen) != len(store.objects) or not all(k in store.objects for k in chosen.tolist()):
                store.replace_all(chosen.tolist())
            continue
        keep = []
        for k in chosen.tolist():
            if k in store.objects or (last_seen is not None and last_seen[n, k] >= slot - window):
                keep.append(k)
        room = store.capacity - len(keep)
        leftovers = sorted(set(store.objects) - set(keep))[:max(room, 0)]
        store.replace_all(keep + leftovers)


class ActualPlane:
    """Interest/Data simulation for one run.

    ``forwarding`` is ``"flow"`` (VIP family, needs ``flow``), ``"shortest_path"``
    or ``"potential_based"``; ``caching`` is ``"vip"`` (stores are set from
    outside each slot) or one of the baseline cache kinds.
    """

    def __init__(self, topo: Topology, catalog: Catalog, stores: list[ContentStore], *,
                 forwarding: str = "flow", caching: str = "vip", flow: FlowEstimate | None = None,
                 potential: PotentialField | None = None, interest_bits: float = 125 * 8,
                 interest_timeout: int = 200, rng: np.random.Generator | None = None,
                 on_delay=None, lce_bias=None, random_insert_prob: float = 0.5):
        self.topo = topo
        self.catalog = catalog
        self.stores = stores
        self.forwarding = forwarding
        self.caching = caching
        self.flow = flow
        self.potential = potential
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.timeout = interest_timeout
        self.on_delay = on_delay
        self.lce_bias = lce_bias
        self.random_insert_prob = random_insert_prob
        self.pit = PitTable(topo.num_nodes)
        self._index = {(a, b): i for i, (a, b) in enumerate(topo.links)}
        self.counters = PlaneCounters()
        L = topo.num_links
        chunk_bits = catalog.chunk_size
        self.data_budget = np.floor(topo.capacity / chunk_bits + 1e-9).astype(int)
        self.interest_budget = np.floor(topo.capacity / interest_bits + 1e-9).astype(int)
        if L and (self.data_budget.min() < 1 or self.interest_budget.min() < 1):
            raise ValueError("every link must carry at least one Interest and one Data Packet per slot")
        self._data_budget = self.data_budget.tolist()
        self._interest_budget = self.interest_budget.tolist()
        self._iq = [deque() for _ in range(L)]
        self._dq = [deque() for _ in range(L)]
        self._busy: set[int] = set()
        self._inbox: list = []
        self._timeouts: dict[int, list] = {}
        self.outstanding = 0
        self.last_seen = np.full((topo.num_nodes, catalog.object_count), -10**9, dtype=np.int64)
        self.data_sent = np.zeros(L, dtype=np.int64)
        self.interests_sent = np.zeros(L, dtype=np.int64)
        self.max_data_per_slot = np.zeros(L, dtype=np.int64)
        self.max_interests_per_slot = np.zeros(L, dtype=np.int64)

    # --- request entry ----------------------------------------------------
    def issue_many(self, origin: int, obj: int, slot: int, count: int) -> None:
        """Issue ``count`` identical requests at ``origin`` in one slot.

        Equivalent to ``count`` calls of :meth:`issue`; single-chunk objects
        take a shortcut that skips building Interests that would only be
        served locally or merged into the origin's PIT.
        """
        if count <= 0:
            return
        if self.catalog.chunks_per_object != 1 or self.on_delay is None:
            for _ in range(count):
                self.issue(origin, obj, slot)
            return
        store = self.stores[origin]
        for _ in range(count):
            store.request(obj)
        if origin == self.topo.source_list[obj] or obj in store:
            for _ in range(count):
                self._count_hit(origin, obj)
                self.on_delay(origin, obj, slot, slot)
            return
        entry = self.pit[origin].get((obj, 0))
        if entry is None:
            first = Request(origin, obj, slot, 1)
            self.outstanding += 1
            self._route_first(first, slot)
            if first.done:
                entry = None
                count -= 1
                if count == 0:
                    return
                for _ in range(count):
                    self.issue(origin, obj, slot)
                return
            self._timeouts.setdefault(slot + self.timeout, []).append(first)
            entry = self.pit[origin][(obj, 0)]
            count -= 1
        pending = self._timeouts.setdefault(slot + self.timeout, [])
        for _ in range(count):
            req = Request(origin, obj, slot, 1)
            entry.requests.append(req)
            pending.append(req)
        self.outstanding += count

    def _route_first(self, req: Request, slot: int) -> None:
        """Forward a fresh single-chunk request whose object is not held at the origin."""
        node, obj = req.origin, req.obj
        pkt = Interest(obj, 0, node, req.created, (), False)
        action = forward_interest(pkt, node, self.stores, self.pit, self._router(), self.topo, LOCAL)
        if action.kind == "unroutable":
            self._fail(req)
            return
        entry = self.pit[node][(obj, 0)] = PitEntry(requests=[req])
        entry.upstream.add(action.next_hop)
        pkt.visited = (node,)
        self._send_interest(node, action.next_hop, pkt)

    def issue(self, origin: int, obj: int, slot: int) -> Request:
        req = Request(origin, obj, slot, self.catalog.chunks_per_object)
        self.outstanding += 1
        for c in range(self.catalog.chunks_per_object):
            self._express(req, c, slot, retx=False)
            if req.done:
                break
        if not req.done:
            self._timeouts.setdefault(slot + self.timeout, []).append(req)
        return req

    def _express(self, req: Request, chunk: int, slot: int, retx: bool) -> None:
        node, obj = req.origin, req.obj
        pkt = Interest(obj, chunk, node, req.created, (), retx)
        store = self.stores[node]
        store.request(obj)
        action = forward_interest(pkt, node, self.stores, self.pit, self._router(), self.topo, LOCAL)
        if action.kind == "serve":
            self._count_hit(node, obj)
            self._complete_chunk(req, chunk, slot)
            return
        table = self.pit[node]
        entry = table.get((obj, chunk))
        if entry is not None:
            if req not in entry.requests:
                entry.requests.append(req)
            if action.kind != "forward":
                return
        if action.kind == "unroutable":
            self._fail(req)
            return
        if entry is None:
            entry = table[(obj, chunk)] = PitEntry(requests=[req])
        entry.upstream.add(action.next_hop)
        pkt.visited = (node,)
        self._send_interest(node, action.next_hop, pkt)

    def _fail(self, req: Request) -> None:
        if not req.done:
            req.done = True
            self.outstanding -= 1
            self.counters.unroutable += 1

    def _complete_chunk(self, req: Request, chunk: int, slot: int) -> None:
        if req.done:
            return
        req.remaining.discard(chunk)
        if not req.remaining:
            req.done = True
            self.outstanding -= 1
            if self.on_delay is not None:
                self.on_delay(req.origin, req.obj, req.created, slot)

    def _count_hit(self, node: int, obj: int) -> None:
        if node == self.topo.source_list[obj]:
            self.counters.source_hits += 1
        else:
            self.counters.cache_hits += 1
            self.stores[node].hit(obj)

    def _router(self):
        if self.forwarding == "flow":
            return self.flow
        if self.forwarding == "potential_based":
            return self.potential
        return None

    # --- links ------------------------------------------------------------
    def _send_interest(self, a: int, b: int, pkt: Interest) -> None:
        l = self._index[(a, b)]
        self._iq[l].append(pkt)
        self._busy.add(l)

    def _send_data(self, a: int, b: int, pkt: DataPacket) -> None:
        l = self._index[(a, b)]
        self._dq[l].append(pkt)
        self._busy.add(l)

    def _transmit(self) -> None:
        nxt = []
        links = self.topo.links
        dbud, ibud = self._data_budget, self._interest_budget
        idle = []
        for l in self._busy:
            dq, iq = self._dq[l], self._iq[l]
            a, b = links[l]
            nd = min(len(dq), dbud[l])
            for _ in range(nd):
                nxt.append((b, a, dq.popleft()))
            ni = min(len(iq), ibud[l])
            for _ in range(ni):
                nxt.append((b, a, iq.popleft()))
            self.data_sent[l] += nd
            self.interests_sent[l] += ni
            if nd > self.max_data_per_slot[l]:
                self.max_data_per_slot[l] = nd
            if ni > self.max_interests_per_slot[l]:
                self.max_interests_per_slot[l] = ni
            if not dq and not iq:
                idle.append(l)
        for l in idle:
            self._busy.discard(l)
        self._inbox = nxt

    def queued_packets(self) -> int:
        return sum(len(q) for q in self._iq) + sum(len(q) for q in self._dq)

    # --- per slot ---------------------------------------------------------
    def deliver(self, slot: int) -> None:
        """Process packets that crossed a link during the previous slot."""
        inbox = self._inbox
        self._inbox = []
        for node, prev, pkt in inbox:
            if type(pkt) is DataPacket:
                self._on_data(node, pkt, slot)
        for node, prev, pkt in inbox:
            if type(pkt) is Interest:
                self._on_interest(node, prev, pkt, slot)

    def retransmit(self, slot: int) -> None:
        for req in self._timeouts.pop(slot, ()):
            if req.done:
                continue
            self.counters.retransmissions += 1
            for c in sorted(req.remaining):
                self._express(req, c, slot, retx=True)
                if req.done:
                    break
            if not req.done:
                self._timeouts.setdefault(slot + self.timeout, []).append(req)

    def transmit(self) -> None:
        self._transmit()

    def _on_interest(self, node: int, prev: int, pkt: Interest, slot: int) -> None:
        obj = pkt.obj
        self.stores[node].request(obj)
        action = forward_interest(pkt, node, self.stores, self.pit, self._router(), self.topo, prev)
        if action.kind == "serve":
            self._count_hit(node, obj)
            self._send_data(node, prev, DataPacket(obj, pkt.chunk, 1))
            return
        table = self.pit[node]
        key = (obj, pkt.chunk)
        entry = table.get(key)
        if entry is not None:
            entry.faces.add(prev)
            if action.kind != "forward":
                return
        if action.kind == "unroutable":
            self.counters.unroutable += 1
            return
        if entry is None:
            entry = table[key] = PitEntry(faces={prev})
        entry.upstream.add(action.next_hop)
        pkt.visited = pkt.visited + (node,)
        self._send_interest(node, action.next_hop, pkt)

    def _on_data(self, node: int, pkt: DataPacket, slot: int) -> None:
        faces, requests = handle_data_arrival(pkt, node, self.pit, self.counters)
        if not faces and not requests:
            return
        self.last_seen[node, pkt.obj] = slot
        if self.caching != "vip" and node != self.topo.source_list[pkt.obj]:
            baseline_cache_update(self.stores[node], self.caching, pkt.obj, pkt.hops, self.rng,
                                  self.lce_bias, self.random_insert_prob)
        for face in faces:
            self._send_data(node, face, DataPacket(pkt.obj, pkt.chunk, pkt.hops + 1))
        for req in requests:
            self._complete_chunk(req, pkt.chunk, slot)
