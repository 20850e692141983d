# coding: utf-8

# # The virtual plane: VIP counts, bias, forwarding and caching
#
# Every node keeps a VIP count per object.  Each slot, a link gives its whole
# reverse capacity to the object with the largest positive (biased) count
# difference.  Each cache holds the objects with the largest (biased) counts.

# In[1]:

import numpy as np

from vipsim import (BiasSpec, VipState, backpressure_weight, caching_decision, compute_bias, forwarding_decision,
                    load_topology, parse_topology, vip_step)
from vipsim.virtual_plane import bias_matrix

MB = 1e6


# A small star: node 0 reaches the source (node 3) through node 1 or the dead end node 2.

# In[2]:

topo = parse_topology("nodes 4\n0 1 3\n0 2 3\n1 3 3\n").with_sources([3])
V = np.array([[5.0], [4.0], [7.0], [0.0]])

for kind in ("none", "min_next_hop"):
    spec = BiasSpec(kind)
    print(kind, "bias at node 0:", compute_bias(V, spec, topo, 0, 0),
          "weight 0->1:", backpressure_weight(V, spec, topo, (0, 1), 0))


# The min-next-hop bias adds the smallest neighbour count, so decisions see
# V + f instead of V.  On a line fed at node 0 the biased differences turn
# positive with smaller raw counts, so less backlog piles up upstream.

# In[3]:

line = load_topology("line4").with_sources([3])
D = 25 * MB  # 100 Mb/slot links carry 4 objects per slot
for kind in ("none", "min_next_hop"):
    spec = BiasSpec(kind)
    state = VipState.zeros(4, 1)
    for t in range(50):
        A = np.array([[3], [0], [0], [0]])
        alloc = forwarding_decision(state, spec, line, D)
        cache = caching_decision(state, spec, line, D)
        state = vip_step(state, A, alloc, cache, line)
    biased = state.counts + bias_matrix(state, spec, line)
    print(f"{kind:>13}: V = {state.counts[:, 0].round(2)}, V + f = {biased[:, 0].round(2)}")


# Caching solves a unit-size knapsack, so taking the top weights is exact.

# In[4]:

cache_topo = parse_topology("nodes 2\n0 1 3\n").with_sources([1, 1, 1]).with_cache_size(2 * MB)
V = np.array([[5.0, 3.0, 9.0], [0.0, 0.0, 0.0]])
dec = caching_decision(V, BiasSpec("none"), cache_topo, MB)
print("node 0 caches objects", np.flatnonzero(dec.s[0]), "draining", dec.cache_rate[0], "VIPs each per slot")


# VIPs move only if they exist: a node holding 1 VIP with 5 units of allocation
# sends 1.

# In[5]:

small = parse_topology("nodes 2\n0 1 5\n").with_sources([1])
state = VipState(np.array([[1.0], [0.0]]))
alloc = forwarding_decision(state, BiasSpec("none"), small, MB)
nxt, moved = vip_step(state, np.zeros((2, 1)), alloc, caching_decision(state, BiasSpec("none"), small, MB), small,
                      return_transfers=True)
print("allocated", alloc.mu[0, 0], "moved", moved[0, 0], "left at node 0:", nxt.counts[0, 0])
