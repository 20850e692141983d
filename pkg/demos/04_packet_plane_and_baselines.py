# coding: utf-8

# # Interests, Data and the comparison policies
#
# The packet plane moves Interests and Data over slotted FIFO links.  VIP
# algorithms forward Interests along the link with the largest recent VIP flow
# and fill caches from the virtual caching decision.  Baselines forward on
# shortest paths (or a replica potential) and use LRU, LFU, LCD, random or
# distance-biased caching.

# In[1]:

import time
import warnings

from vipsim import SimConfig, load_topology, simulate
from vipsim.baselines import ALGORITHMS

warnings.simplefilter("ignore")

topo = load_topology("geant")
base = dict(slots=1000, lam=20.0, catalog_size=100, object_size_bytes=12.5e6, cache_size_bytes=62.5e6)


# Same topology, seed and traffic for every policy.

# In[2]:

print(f"{'algorithm':<18}{'mean delay':>11}{'cache hits':>12}{'unfinished':>12}{'seconds':>9}")
for alg in ALGORITHMS:
    t0 = time.perf_counter()
    res = simulate(topo, SimConfig(algorithm=alg, **base), seed=0, check_invariants=True)
    m, s = res.metrics, res.summary
    print(f"{alg:<18}{s['mean_delay']:>11.3f}{m.cache_hits:>12}{s['unfinished']:>12}{time.perf_counter() - t0:>9.1f}")


# Objects can also be split into Data Packets; a request finishes when its last
# chunk arrives.

# In[3]:

res = simulate(load_topology("ring5"), SimConfig(algorithm="evip", slots=300, lam=2.0, catalog_size=10,
                                                 object_size_bytes=12.5e6, cache_size_bytes=25e6,
                                                 data_size_bytes=3.125e6), seed=0)
print("4 chunks per object: mean delay", round(res.summary["mean_delay"], 2), "slots")
