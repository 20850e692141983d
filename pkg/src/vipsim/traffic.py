"""Zipf object popularity and per-slot Poisson request arrivals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# spawn_key tag for per-node arrival streams, see ``node_streams``
ARRIVAL_STREAM = 1


@dataclass(frozen=True)
class PopularityModel:
    probabilities: np.ndarray
    zipf_exponent: float = 0.75

    @property
    def num_objects(self) -> int:
        return len(self.probabilities)


def zipf_probabilities(K: int, s: float = 0.75) -> PopularityModel:
    """p_k = k^-s / sum_j j^-s for k = 1..K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if s < 0:
        raise ValueError("Zipf exponent must be non-negative")
    weights = np.arange(1, K + 1, dtype=float) ** -s
    # summing smallest terms first keeps the normalizer accurate for large K
    total = math.fsum(weights[::-1])
    return PopularityModel(weights / total, float(s))


def truncation_bound(lam: float, pop: PopularityModel, factor: float = 50.0) -> int:
    """A_max: per (node, object) cap on arrivals in one slot (ceil(factor * lam * p_1))."""
    return max(1, math.ceil(factor * lam * float(pop.probabilities[0])))


def node_streams(seed: int, num_nodes: int, run: int = 0) -> list[np.random.Generator]:
    """One independent generator per node.

    Node n's stream is keyed by ``(run, ARRIVAL_STREAM, n)`` under the master
    seed, so adding or removing nodes leaves every other node's stream intact.
    """
    return [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, ARRIVAL_STREAM, n)))
        for n in range(num_nodes)
    ]


def generate_arrivals(rngs, lambda_per_node: float, pop: PopularityModel, requesting_nodes=None,
                      sources=None, a_max: int | None = None) -> np.ndarray:
    """Draw one slot of exogenous request counts A_n^k(t) as an N x K integer matrix.

    Each requesting node draws independent Poisson(lambda * p_k) counts per
    object (a Poisson(lambda) total thinned by popularity).  Objects sourced
    at the node itself generate nothing there.  ``rngs`` is the per-node list
    from :func:`node_streams`.
    """
    if lambda_per_node < 0:
        raise ValueError("lambda must be non-negative")
    N, K = len(rngs), pop.num_objects
    counts = np.zeros((N, K), dtype=np.int64)
    if lambda_per_node == 0:
        return counts
    rates = lambda_per_node * pop.probabilities
    nodes = range(N) if requesting_nodes is None else requesting_nodes
    for n in nodes:
        counts[n] = rngs[n].poisson(rates)
    if sources is not None:
        counts[np.asarray(sources), np.arange(K)] = 0
    if a_max is not None:
        np.minimum(counts, a_max, out=counts)
    return counts


class ArrivalProcess:
    """Stateful wrapper that yields one ArrivalBatch (N x K counts) per slot."""

    def __init__(self, num_nodes: int, lam: float, pop: PopularityModel, seed: int, run: int = 0,
                 requesting_nodes=None, sources=None, truncation_factor: float = 50.0):
        self.lam = lam
        self.pop = pop
        self.requesting_nodes = None if requesting_nodes is None else sorted(requesting_nodes)
        self.sources = sources
        self.a_max = truncation_bound(lam, pop, truncation_factor)
        self._rngs = node_streams(seed, num_nodes, run)

    def __call__(self) -> np.ndarray:
        return generate_arrivals(self._rngs, self.lam, self.pop, self.requesting_nodes,
                                 self.sources, self.a_max)

    def mean_rates(self, num_nodes: int) -> np.ndarray:
        """Configured lambda_n^k (before truncation), zero at sources and idle nodes."""
        rates = np.zeros((num_nodes, self.pop.num_objects))
        nodes = range(num_nodes) if self.requesting_nodes is None else self.requesting_nodes
        for n in nodes:
            rates[n] = self.lam * self.pop.probabilities
        if self.sources is not None:
            rates[np.asarray(self.sources), np.arange(self.pop.num_objects)] = 0.0
        return rates
