# coding: utf-8

# # Congestion control and the utility-delay tradeoff
#
# With congestion control on, requests wait in a transport buffer Q and enter the
# network as VIPs only when the virtual queue Y exceeds the local VIP count.  The
# auxiliary rate gamma maximizes W*g(gamma) - Y*gamma; larger W chases utility
# harder and tolerates more backlog.

# In[1]:

import warnings

from vipsim import choose_auxiliary, load_topology, simulate, SimConfig

warnings.simplefilter("ignore")


# For g(x) = -1/x the maximizer is sqrt(W/Y), clipped to [0, alpha_max].

# In[2]:

for W, Y in ((4, 1), (4, 100), (4, 0)):
    print(f"W={W} Y={Y}: gamma = {float(choose_auxiliary(Y, W, 10.0)):g}")


# A 4-node line with one object at node 3 and requests at node 0.  Links carry
# c = 4 objects per slot and node 0 offers 1.5c, so without admission control
# the backlog grows by about 0.5c per slot.

# In[3]:

line = load_topology("line4")
base = dict(algorithm="evip", slots=3000, lam=6.0, catalog_size=1, requesting_nodes=(0,), sources=(3,),
            object_size_bytes=3.125e6, cache_size_bytes=0, packet_plane=False)

free = simulate(line, SimConfig(**base), seed=0)
print("no admission control: backlog slope", round(free.summary["backlog_slope"], 3))


# Sweeping W: admitted rate and utility climb toward the bottleneck (g(4) = -0.25)
# while the VIP backlog grows.

# In[4]:

for W in (1, 10, 100):
    res = simulate(line, SimConfig(congestion_enabled=True, W=W, alpha_max_factor=1.0, **base), seed=0)
    s = res.summary
    print(f"W={W:>3}: admitted {res.metrics.admitted_avg[0, 0]:.3f}/slot, utility {s['sum_utility']:.4f}, "
          f"mean backlog {s['mean_backlog']:.2f}, dropped {s['drops']:.0f}")
