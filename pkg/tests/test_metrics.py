import numpy as np
import pytest

from vipsim.congestion import AlphaFairUtility
from vipsim.metrics import (InvariantViolation, RunMetrics, achieved_utility, aggregate, backlog_slope,
                            compute_drift_constants, summarize)
from vipsim.topology import Catalog, parse_topology

from oracles import drift_B

MB = 1e6


def test_delay_arithmetic():
    run = RunMetrics()
    run.record_delay(0, 0, 5, 9)
    run.record_delay(1, 0, 6, 7)
    out = summarize(run)
    assert out["total_delay"] == 5 and out["mean_delay"] == 2.5
    assert out["completed"] == 2 and not out["empty"]


def test_empty_run_warns():
    with pytest.warns(UserWarning, match="no requests"):
        out = summarize(RunMetrics())
    assert out["total_delay"] == 0 and out["empty"]


def test_fulfilled_before_creation_is_a_violation():
    with pytest.raises(InvariantViolation):
        RunMetrics().record_delay(0, 0, 5, 4)


def test_saturated_utility_equals_g_max():
    u = AlphaFairUtility(2.0)
    amax = np.array([[2.0, 4.0], [1.0, 8.0]])
    run = RunMetrics()
    for _ in range(7):
        run.record_admissions(amax)
    assert np.array_equal(run.admitted_avg, amax)
    with pytest.warns(UserWarning, match="G_max"):
        consts = compute_drift_constants(parse_topology("nodes 2\n0 1 10\n"), Catalog(2, MB), 0,
                                         alpha_max=amax, utility=u)
    assert achieved_utility(run.admitted_avg, u) == pytest.approx(consts.G_max)


def test_utility_floor_and_mask():
    u = AlphaFairUtility(2.0)
    avg = np.array([0.0, 2.0])
    assert achieved_utility(avg, u, floor=0.5) == pytest.approx(-2.5)
    assert achieved_utility(avg, u, mask=np.array([False, True])) == pytest.approx(-0.5)
    assert achieved_utility(None, u) == 0.0


def test_backlog_slope():
    assert backlog_slope(np.arange(1000) * 3.0) == pytest.approx(3.0)
    assert backlog_slope(np.full(100, 7.0)) == pytest.approx(0.0)
    series = np.concatenate([np.zeros(900), np.arange(100) * 0.5])
    assert backlog_slope(series) == pytest.approx(0.5)


def test_aggregate():
    out = aggregate([{"total_delay": 1.0}, {"total_delay": 3.0}], keys=("total_delay",))
    assert out["total_delay"] == 2.0 and out["total_delay_std"] == pytest.approx(np.sqrt(2.0))
    assert out["runs"] == 2


def test_drift_single_node():
    topo = parse_topology("nodes 1\n")
    c = compute_drift_constants(topo, Catalog(1, MB), a_max=2, cache_rate=0)
    assert c.B == 2.0
    assert c.mu_in_max.tolist() == [0.0] and c.mu_out_max.tolist() == [0.0]


def test_drift_symmetric_pair():
    topo = parse_topology("nodes 2\n0 1 1\n")
    c = compute_drift_constants(topo, Catalog(1, MB), a_max=0, cache_rate=0)
    assert c.B == 1.0
    assert c.C_max == 1.0


def test_drift_all_zero():
    c = compute_drift_constants(parse_topology("nodes 3\n"), Catalog(4, MB), a_max=0, cache_rate=0)
    assert c.B == 0.0


def test_drift_matches_hand_formula_on_asymmetric_graph():
    topo = parse_topology("nodes 3\n0 1 2\n1 2 3\nlink 2 1 1\ncache 1 125000\n")
    K = 2
    c = compute_drift_constants(topo, Catalog(K, MB), a_max=[[1, 2], [0, 0], [3, 1]])
    # C/D per link: 0->1 2, 1->0 2, 1->2 3, 2->1 1; node 1 caches one object (r = 1)
    mu_out = [2, 5, 1]
    mu_in = [2, 3, 3]
    assert c.B == pytest.approx(drift_B(mu_out, mu_in, [3, 0, 4], [0, 1, 0], K), rel=1e-15)
    assert np.isnan(c.B_hat) and c.G_max is None


def test_backlog_recount():
    # the running backlog equals a fresh sum over the VIP matrix
    from vipsim.simulation import SimConfig, Simulation
    from vipsim.topology import load_topology
    cfg = SimConfig(algorithm="evip", slots=3000, lam=2.0, catalog_size=5, object_size_bytes=12.5e6,
                    packet_plane=False)
    sim = Simulation(load_topology("ring5"), cfg, seed=1)
    for t in range(3000):
        sim.step()
        if t % 1000 == 999:
            assert sim.V.backlog == pytest.approx(sum(sum(row) for row in sim.V.counts.tolist()))
    assert len(sim.metrics.backlog_series) == 3000
