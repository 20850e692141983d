"""Discrete-time simulator of enhanced VIP forwarding, caching and congestion control for NDN."""
from .topology import Catalog, Topology, assign_sources, load_topology, parse_topology
from .traffic import PopularityModel, generate_arrivals, zipf_probabilities
from .virtual_plane import (BiasSpec, CacheDecision, ForwardingAllocation, VipState, backpressure_weight,
                            caching_decision, compute_bias, forwarding_decision, vip_step)
from .congestion import (AlphaFairUtility, CongestionState, UtilityFunction, admit_vips, choose_auxiliary,
                         transport_step, virtual_step)
from .metrics import DriftConstants, RunMetrics, compute_drift_constants, summarize
from .simulation import SimConfig, Simulation, simulate

__version__ = "0.1.0"

__all__ = [
    "Catalog", "Topology", "assign_sources", "load_topology", "parse_topology",
    "PopularityModel", "generate_arrivals", "zipf_probabilities",
    "BiasSpec", "CacheDecision", "ForwardingAllocation", "VipState", "backpressure_weight",
    "caching_decision", "compute_bias", "forwarding_decision", "vip_step",
    "AlphaFairUtility", "CongestionState", "UtilityFunction", "admit_vips", "choose_auxiliary",
    "transport_step", "virtual_step",
    "DriftConstants", "RunMetrics", "compute_drift_constants", "summarize",
    "SimConfig", "Simulation", "simulate",
]
