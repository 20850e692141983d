"""One simulation run: virtual plane, optional congestion control, packet plane, metrics."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from . import congestion as cc
from .actual_plane import ActualPlane, FlowEstimate, update_content_stores
from .baselines import ALGORITHMS, BaselinePolicy, PotentialField, make_store
from .metrics import InvariantViolation, RunMetrics, summarize
from .topology import BYTE, Catalog, Topology, assign_sources
from .traffic import ArrivalProcess, zipf_probabilities
from .virtual_plane import (BiasSpec, CacheDecision, VipState, bias_matrix, caching_decision,
                            forwarding_decision, vip_step)

# spawn_key tags under (seed, run)
SOURCE_STREAM = 0
POLICY_STREAM = 2


@dataclass
class SimConfig:
    """Every per-run knob.  Sizes are in bytes, capacities come from the topology file."""

    algorithm: str = "evip"
    slots: int = 10_000
    drain_slots: int = 2_000
    # traffic
    lam: float = 1.0
    zipf_exponent: float = 0.75
    catalog_size: int = 100
    arrival_truncation_factor: float = 50.0
    requesting_nodes: tuple | None = None
    sources: tuple | None = None  # fixed src(k) per object; None draws them uniformly per run
    # objects and caches
    object_size_bytes: float = 12.5e6
    cache_size_bytes: float | None = None  # default per-node cache; None keeps file values / 0
    # virtual plane
    bias_kind: str | None = None  # None: min_next_hop for evip, none for vip
    bias_z: float = 1.0
    hop_cost: float = 1.0
    cache_rate_r: float | None = None
    cache_bias_enabled: bool = True
    # congestion control
    congestion_enabled: bool = False
    W: float = 1.0
    alpha_max_factor: float = 10.0
    q_max_factor: float = 1000.0
    utility: str = "alpha_fair_2"
    # packet plane
    packet_plane: bool = True
    flow_window: int = 100
    flow_mode: str = "window"
    strict_cache_placement: bool = False
    chunks_per_object: int = 1
    data_size_bytes: float | None = None  # overrides chunks_per_object when set
    interest_size_bytes: float = 125.0
    interest_timeout: int = 200
    # baselines
    lfu_decay: float | None = 0.99
    potential_refresh: int = 100
    random_insert_prob: float = 0.5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.congestion_enabled and not self.is_vip_family:
            raise ValueError("congestion control applies to the VIP algorithms only")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def is_vip_family(self) -> bool:
        return self.algorithm in ("evip", "vip")

    def bias_spec(self) -> BiasSpec:
        kind = self.bias_kind
        if kind is None:
            kind = "min_next_hop" if self.algorithm == "evip" else "none"
        return BiasSpec(kind=kind, z=self.bias_z, hop_cost=self.hop_cost)

    def catalog(self) -> Catalog:
        D = self.object_size_bytes * BYTE
        if self.data_size_bytes is not None:
            return Catalog.from_chunk_size(self.catalog_size, D, self.data_size_bytes * BYTE)
        return Catalog(self.catalog_size, D, self.chunks_per_object)


@dataclass
class RunResult:
    config: SimConfig
    seed: int
    run: int
    metrics: RunMetrics
    summary: dict
    sources: np.ndarray
    final_vip: np.ndarray | None = None
    trace: list = field(default_factory=list)


class Simulation:
    """Slot-by-slot engine.  Use :meth:`run`, or :meth:`step` for fine-grained tests."""

    def __init__(self, topo: Topology, cfg: SimConfig, seed: int = 0, run: int = 0,
                 check_invariants: bool = False, record_trace: bool = False, sources=None):
        self.cfg = cfg
        self.seed = seed
        self.run_index = run
        self.check = check_invariants
        self.record_trace = record_trace
        self.trace: list = []
        catalog = cfg.catalog()
        if cfg.cache_size_bytes is not None:
            topo = topo.with_cache_size(cfg.cache_size_bytes * BYTE)
        topo.check_catalog(catalog)
        if sources is None and cfg.sources is not None:
            sources = cfg.sources
        if sources is not None and len(sources) != catalog.object_count:
            raise ValueError(f"got {len(sources)} sources for {catalog.object_count} objects")
        if sources is None:
            sources = assign_sources(topo, catalog, np.random.SeedSequence(seed, spawn_key=(run, SOURCE_STREAM)))
        self.topo = topo = topo.with_sources(sources)
        self.catalog = catalog
        N, K = topo.num_nodes, catalog.object_count
        self.pop = zipf_probabilities(K, cfg.zipf_exponent)
        self.arrivals = ArrivalProcess(N, cfg.lam, self.pop, seed, run, cfg.requesting_nodes,
                                       topo.sources, cfg.arrival_truncation_factor)
        self.metrics = RunMetrics()
        self.utility = cc.make_utility(cfg.utility)
        self.slot = 1
        self.policy_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, POLICY_STREAM)))
        self.cache_slots = topo.cache_slots(catalog.object_size)
        rates = self.arrivals.mean_rates(N)
        self.metrics.utility_mask = rates > 0

        self.V = None
        self.cong = None
        if cfg.is_vip_family:
            self.V = VipState.zeros(N, K)
            self.bias = cfg.bias_spec()
            self.cache_bias = self.bias if cfg.cache_bias_enabled else BiasSpec("none")
            if cfg.congestion_enabled:
                amax = cc.default_alpha_max(cfg.lam, self.pop.probabilities, cfg.alpha_max_factor)
                self.cong = cc.CongestionState.initial((N, K), cfg.W, amax[None, :].repeat(N, 0),
                                                       cfg.q_max_factor * amax[None, :].repeat(N, 0))
                self.utility.check_shape(float(self.cong.alpha_max.max()))
                self._transport = [[deque() for _ in range(K)] for _ in range(N)]

        self.plane = None
        if cfg.packet_plane:
            self._build_plane()

    # --- construction -------------------------------------------------------
    def _build_plane(self) -> None:
        cfg, topo, catalog = self.cfg, self.topo, self.catalog
        if cfg.is_vip_family:
            stores = [make_store("vip", m) for m in self.cache_slots]
            self.flow = FlowEstimate(topo, catalog.object_count, cfg.flow_window, cfg.flow_mode)
            self.plane = ActualPlane(topo, catalog, stores, forwarding="flow", caching="vip", flow=self.flow,
                                     interest_bits=cfg.interest_size_bytes * BYTE,
                                     interest_timeout=cfg.interest_timeout, rng=self.policy_rng,
                                     on_delay=self.metrics.record_delay)
            return
        policy = BaselinePolicy.from_algorithm(cfg.algorithm)
        stores = [make_store(policy.caching, m, self.policy_rng, cfg.lfu_decay) for m in self.cache_slots]
        potential = PotentialField(topo, cfg.potential_refresh) if policy.forwarding == "potential_based" else None
        self.plane = ActualPlane(topo, catalog, stores, forwarding=policy.forwarding, caching=policy.caching,
                                 potential=potential, interest_bits=cfg.interest_size_bytes * BYTE,
                                 interest_timeout=cfg.interest_timeout, rng=self.policy_rng,
                                 on_delay=self.metrics.record_delay,
                                 random_insert_prob=cfg.random_insert_prob)
        self.potential = potential

    # --- stepping -------------------------------------------------------------
    def step(self, generate: bool = True) -> None:
        t = self.slot
        A = self.arrivals() if generate else np.zeros((self.topo.num_nodes, self.catalog.object_count),
                                                      dtype=np.int64)
        released = A
        if self.V is not None:
            released = self._virtual_step(A, generate)
        elif generate:
            self.metrics.record_admissions(A)
        if self.plane is not None:
            self._packet_step(t, released)
        self.slot += 1

    def _virtual_step(self, A, generate: bool):
        cfg, topo, V = self.cfg, self.topo, self.V
        if generate:
            self.metrics.backlog_series.append(V.backlog)
        if self.cong is not None:
            cs = self.cong
            alpha = cc.admit_vips(cs.Q, cs.Y, V.counts, cs.alpha_max)
            gamma = cc.choose_auxiliary(cs.Y, cs.W, cs.alpha_max, self.utility)
            cs.Q, dropped = cc.transport_step(cs.Q, alpha, A, cs.q_max)
            cs.Y = cc.virtual_step(cs.Y, alpha, gamma)
            self.metrics.dropped += float(dropped.sum())
            inject = alpha
            released = self._release(alpha, A, dropped)
        else:
            inject = A
            released = A
        if generate:
            self.metrics.record_admissions(inject)
        bias = bias_matrix(V, self.bias, topo)
        alloc = forwarding_decision(V, self.bias, topo, self.catalog.object_size, bias)
        cbias = bias if self.cache_bias is self.bias else bias_matrix(V, self.cache_bias, topo)
        cache = caching_decision(V, self.cache_bias, topo, self.catalog.object_size, cfg.cache_rate_r, cbias)
        if self.record_trace:
            self.trace.append((alloc.mu.copy(), cache.s.copy()))
        if self.check:
            self._check_virtual(alloc, cache)
        self.V, moved = vip_step(V, inject, alloc, cache, topo, return_transfers=True)
        if self.plane is not None:
            self.flow.update(moved)
            update_content_stores(cache.s, self.plane.stores, cfg.strict_cache_placement,
                                  self.plane.last_seen, self.slot, cfg.flow_window)
        if self.check:
            self._check_state()
        return released

    def _release(self, alpha, A, dropped):
        """Mirror the transport queue with actual requests: release alpha, enqueue A, drop overflow."""
        out = np.zeros_like(A)
        t = self.slot
        rel = np.argwhere(alpha > 0)
        for n, k in rel:
            q = self._transport[n][k]
            m = int(round(alpha[n, k]))
            out[n, k] = m
            for _ in range(m):
                q.popleft()
        for n, k in np.argwhere(A > 0):
            q = self._transport[n][k]
            keep = int(A[n, k]) - int(round(dropped[n, k]))
            q.extend([t] * keep)
        return out

    def _packet_step(self, t: int, released) -> None:
        plane = self.plane
        plane.deliver(t)
        plane.retransmit(t)
        if self.V is None:
            if self.potential is not None:
                self.potential.update(t, plane.stores)
            if self.cfg.algorithm == "sp_lfu":
                for s in plane.stores:
                    s.tick(t)
        nz = np.argwhere(released > 0)
        if len(nz):
            for n, k in nz.tolist():
                plane.issue_many(n, k, t, int(released[n, k]))
        plane.transmit()
        if self.check:
            for n, s in enumerate(plane.stores):
                if len(s) > self.cache_slots[n]:
                    raise InvariantViolation(f"cache overflow at node {n}")

    # --- invariants -----------------------------------------------------------
    def _check_virtual(self, alloc, cache: CacheDecision) -> None:
        cap = self.topo.reverse_capacity / self.catalog.object_size
        used = alloc.mu.sum(axis=1)
        if np.any(used > cap * (1 + 1e-12)):
            raise InvariantViolation("link allocation exceeds C_ba/D")
        if np.any(cache.s.sum(axis=1) > self.cache_slots):
            raise InvariantViolation("virtual cache exceeds floor(L_n/D)")

    def _check_state(self) -> None:
        V = self.V.counts
        if np.any(V < 0):
            raise InvariantViolation("negative VIP count")
        if np.any(V[self.topo.sources, np.arange(V.shape[1])] != 0):
            raise InvariantViolation("VIP count at a source is nonzero")
        if self.cong is not None:
            if np.any(self.cong.Q > self.cong.q_max) or np.any(self.cong.Q < 0):
                raise InvariantViolation("transport queue outside [0, Q_max]")
            if np.any(self.cong.Y < 0):
                raise InvariantViolation("negative virtual queue")

    # --- full run -------------------------------------------------------------
    def run(self) -> RunResult:
        cfg = self.cfg
        for _ in range(cfg.slots):
            self.step(generate=True)
        if self.plane is not None:
            for _ in range(cfg.drain_slots):
                if self.plane.outstanding == 0 and not self._transport_backlog():
                    break
                self.step(generate=False)
            m = self.metrics
            c = self.plane.counters
            m.stale, m.unroutable = c.stale, c.unroutable
            m.retransmissions, m.cache_hits, m.source_hits = c.retransmissions, c.cache_hits, c.source_hits
            m.unfinished = self.plane.outstanding + self._transport_backlog()
        # g(x) = -1/x is singular at 0; pairs that admitted nothing count at the floor
        amax = cc.default_alpha_max(cfg.lam, self.pop.probabilities, cfg.alpha_max_factor)
        floor = self.utility.domain_floor * (self.cong.alpha_max if self.cong is not None else amax)
        summary = summarize(self.metrics, self.utility, floor, requests_expected=self.plane is not None)
        return RunResult(cfg, self.seed, self.run_index, self.metrics, summary, self.topo.sources,
                         None if self.V is None else self.V.counts.copy(), self.trace)

    def _transport_backlog(self) -> int:
        if self.cong is None:
            return 0
        return int(self.cong.Q.sum())


def simulate(topo: Topology, cfg: SimConfig, seed: int = 0, run: int = 0, **kw) -> RunResult:
    return Simulation(topo, cfg, seed, run, **kw).run()

