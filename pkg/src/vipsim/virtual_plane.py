"""VIP counters and the biased backpressure forwarding / max-weight caching step.

All state matrices are N x K (node, object); per-link matrices are L x K in
``Topology.links`` order.  Ties in every argmax go to the lowest object index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import Topology

BIAS_KINDS = ("none", "min_next_hop", "shortest_path", "general")


@dataclass
class VipState:
    counts: np.ndarray  # V_n^k(t), float N x K
    slot: int = 1

    @classmethod
    def zeros(cls, num_nodes: int, num_objects: int) -> "VipState":
        return cls(np.zeros((num_nodes, num_objects)))

    @property
    def backlog(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class BiasSpec:
    """Which bias f_n^k(V) is added to the VIP counts.

    ``none``           f = 0 (the plain VIP algorithm; z -> infinity).
    ``min_next_hop``   f_n^k = min over next hops n' of V_n'^k / z_n'^k.
    ``shortest_path``  f_n^k = hop_cost * hops(n, src(k)), a constant bias.
    ``general``        f_n^k = sum_n' eta[n, n', k] * V_n'^k / z_n'^k.

    ``z`` is a positive scalar or an N x K array; ``eta`` is N x N x K (or
    N x N, shared by all objects) with entries in [0, 1].
    """

    kind: str = "none"
    z: float | np.ndarray = 1.0
    eta: np.ndarray | None = None
    hop_cost: float = 1.0

    def __post_init__(self):
        if self.kind not in BIAS_KINDS:
            raise ValueError(f"unknown bias kind {self.kind!r}; expected one of {BIAS_KINDS}")
        if np.any(np.asarray(self.z) <= 0):
            raise ValueError("bias normalizer z must be positive")
        if self.kind == "general":
            if self.eta is None:
                raise ValueError("general bias needs an eta weight table")
            if np.any((self.eta < 0) | (self.eta > 1)):
                raise ValueError("eta weights must lie in [0, 1]")
        if self.hop_cost < 0:
            raise ValueError("hop_cost must be non-negative")


@dataclass
class ForwardingAllocation:
    mu: np.ndarray  # L x K, objects/slot
    k_star: np.ndarray  # per link, -1 when the link is idle


@dataclass
class CacheDecision:
    s: np.ndarray  # N x K bool
    cache_rate: np.ndarray  # r_n, objects/slot


def bias_matrix(V, spec: BiasSpec, topo: Topology) -> np.ndarray:
    """f_n^k(V) for every node and object.

    The bias is 0 at src(k): a source absorbs every VIP for its object, so its
    biased count stays 0 just like V.
    """
    counts = V.counts if isinstance(V, VipState) else np.asarray(V, dtype=float)
    N, K = counts.shape
    if spec.kind == "none":
        return np.zeros((N, K))
    if spec.kind == "shortest_path":
        return spec.hop_cost * topo.hops[:, topo.sources]
    normalized = counts / spec.z
    if spec.kind == "general":
        eta = spec.eta if spec.eta.ndim == 3 else spec.eta[:, :, None]
        f = np.einsum("nmk,mk->nk", np.broadcast_to(eta, (N, N, K)), normalized)
    else:
        # min_next_hop: a node with no permitted next hop for k gets bias 0
        allowed = topo.allowed_mask()
        cand = np.where(allowed, normalized[topo.link_dst], np.inf)
        f = np.full((N, K), np.inf)
        np.minimum.at(f, topo.link_src, cand)
        f[np.isinf(f)] = 0.0
    if topo.sources is not None:
        f[topo.sources, np.arange(K)] = 0.0
    return f


def compute_bias(V, spec: BiasSpec, topo: Topology, node: int, obj: int) -> float:
    """Scalar f_node^obj(V); see :func:`bias_matrix`."""
    counts = V.counts if isinstance(V, VipState) else np.asarray(V, dtype=float)
    if spec.kind == "none":
        return 0.0
    if spec.kind == "shortest_path":
        return float(spec.hop_cost * topo.hops[node, topo.sources[obj]])
    if topo.sources is not None and node == topo.sources[obj]:
        return 0.0
    z = np.broadcast_to(np.asarray(spec.z, dtype=float), counts.shape)
    if spec.kind == "general":
        eta = spec.eta[node, :, obj] if spec.eta.ndim == 3 else spec.eta[node]
        return float(np.sum(eta * counts[:, obj] / z[:, obj]))
    allowed = topo.allowed_mask()
    vals = [counts[topo.link_dst[i], obj] / z[topo.link_dst[i], obj]
            for i in topo.out_links[node] if allowed[i, obj]]
    return float(min(vals)) if vals else 0.0


def backpressure_weight(V, spec: BiasSpec, topo: Topology, link: tuple[int, int], obj: int) -> float:
    """W_ab^k = (V_a^k + f_a^k) - (V_b^k + f_b^k); may be negative."""
    counts = V.counts if isinstance(V, VipState) else np.asarray(V, dtype=float)
    a, b = link
    return float((counts[a, obj] + compute_bias(counts, spec, topo, a, obj))
                 - (counts[b, obj] + compute_bias(counts, spec, topo, b, obj)))


def forwarding_decision(V, spec: BiasSpec, topo: Topology, object_size: float,
                        bias: np.ndarray | None = None) -> ForwardingAllocation:
    """Give each link's whole reverse capacity C_ba/D to its max-weight object, if positive."""
    counts = V.counts if isinstance(V, VipState) else np.asarray(V, dtype=float)
    if bias is None:
        bias = bias_matrix(counts, spec, topo)
    biased = counts + bias
    weights = biased[topo.link_src] - biased[topo.link_dst]
    if topo.allowed is not None:
        weights = np.where(topo.allowed, weights, -np.inf)
    L, K = weights.shape
    mu = np.zeros((L, K))
    k_star = np.full(L, -1, dtype=np.intp)
    if L == 0:
        return ForwardingAllocation(mu, k_star)
    best = np.argmax(weights, axis=1)  # first maximum wins ties
    rows = np.arange(L)
    active = weights[rows, best] > 0
    mu[rows[active], best[active]] = topo.reverse_capacity[active] / object_size
    k_star[active] = best[active]
    return ForwardingAllocation(mu, k_star)


def caching_decision(V, spec: BiasSpec, topo: Topology, object_size: float,
                     cache_rate=None, bias: np.ndarray | None = None) -> CacheDecision:
    """Per node, cache the floor(L_n/D) objects with the largest V + f.

    Items have unit size, so taking the top entries solves the knapsack
    exactly.  ``cache_rate`` defaults to floor(L_n/D) objects/slot.
    """
    counts = V.counts if isinstance(V, VipState) else np.asarray(V, dtype=float)
    if bias is None:
        bias = bias_matrix(counts, spec, topo)
    weights = counts + bias
    slots = topo.cache_slots(object_size)
    order = np.argsort(-weights, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(weights.shape[1])[None, :].repeat(weights.shape[0], 0), axis=1)
    s = rank < slots[:, None]
    if cache_rate is None:
        r = slots.astype(float)
    else:
        r = np.broadcast_to(np.asarray(cache_rate, dtype=float), slots.shape).copy()
    return CacheDecision(s, r)


def vip_step(V, arrivals, alloc: ForwardingAllocation, cache: CacheDecision, topo: Topology,
             return_transfers: bool = False):
    """Advance the VIP counts one slot with actual-transfer accounting.

    Node n sends min(V_n^k, sum_b mu_nb^k) VIPs of object k, split across its
    outgoing links in proportion to allocation; receivers get only what was
    sent.  Arrivals land after transmissions, and the source of each object
    is pinned to zero.
    """
    state = V if isinstance(V, VipState) else VipState(np.asarray(V, dtype=float))
    counts = state.counts
    mu = alloc.mu
    N, K = counts.shape
    out_alloc = np.zeros((N, K))
    np.add.at(out_alloc, topo.link_src, mu)
    sent = np.minimum(counts, out_alloc)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(out_alloc > 0, sent / out_alloc, 0.0)
    transfers = mu * frac[topo.link_src]
    incoming = np.zeros((N, K))
    np.add.at(incoming, topo.link_dst, transfers)
    new = counts - sent + arrivals + incoming - cache.cache_rate[:, None] * cache.s
    np.maximum(new, 0.0, out=new)
    if topo.sources is not None:
        new[topo.sources, np.arange(K)] = 0.0
    nxt = VipState(new, state.slot + 1)
    if return_transfers:
        return nxt, transfers
    return nxt
