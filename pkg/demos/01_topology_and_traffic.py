# coding: utf-8

# # Topologies, objects and request traffic
#
# A topology file lists undirected edges ("a b capacity" in Mb/slot), optional
# one-way overrides ("link a b capacity") and per-node cache sizes ("cache n bytes").
# The package bundles GEANT, a DTelekom-sized graph, a 4-node line and a 5-node ring.

# In[1]:

import numpy as np

from vipsim import Catalog, assign_sources, load_topology, parse_topology, zipf_probabilities
from vipsim.traffic import ArrivalProcess

geant = load_topology("geant")
print(geant.num_nodes, "nodes,", geant.num_links, "directed links, connected:", geant.is_connected())


# A hand-written file parses the same way.  Capacities are stored in bits per slot.

# In[2]:

tiny = parse_topology("""nodes 3
0 1 500
1 2 200
link 2 1 50   # slower in one direction
cache 1 62500000
""")
for (a, b), c in zip(tiny.links, tiny.capacity):
    print(f"{a} -> {b}: {c / 1e6:g} Mb/slot")
print("cache bits per node:", tiny.cache_size)


# With 25 MB objects every GEANT link moves C/D objects per slot, and the hop
# matrix gives shortest paths for the fallback and baseline routers.

# In[3]:

D = 25e6 * 8
print("C/D on GEANT:", sorted(set(geant.normalized_capacity(D).round(3))))
print("hops from node 0:", geant.hops[0])


# Each object lives at one source node, drawn uniformly from a seeded stream.

# In[4]:

catalog = Catalog(3000, D)
src = assign_sources(geant, catalog, seed=7)
print("objects per node:", np.bincount(src, minlength=geant.num_nodes))


# Popularity is Zipf with exponent 0.75 by default.  Each requesting node draws
# Poisson(lambda * p_k) requests per object per slot from its own stream.

# In[5]:

pop = zipf_probabilities(3000, 0.75)
print("p_1 .. p_5:", pop.probabilities[:5].round(5))
print("p_1 / p_2:", pop.probabilities[0] / pop.probabilities[1], "vs", 2 ** 0.75)

arrivals = ArrivalProcess(geant.num_nodes, 10.0, pop, seed=7, sources=src)
slots = 200
per_node = sum(arrivals().sum(axis=1) for _ in range(slots)) / slots
print("mean requests per node per slot:", per_node.round(2))
