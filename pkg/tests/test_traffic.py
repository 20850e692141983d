import math

import numpy as np
import pytest

from vipsim.traffic import (ArrivalProcess, PopularityModel, generate_arrivals, node_streams,
                            truncation_bound, zipf_probabilities)


def test_single_object():
    assert zipf_probabilities(1, 3.0).probabilities.tolist() == [1.0]


def test_k3_matches_direct_summation():
    raw = [k ** -0.75 for k in (1, 2, 3)]
    expected = [w / sum(raw) for w in raw]
    p = zipf_probabilities(3, 0.75).probabilities
    assert p == pytest.approx(expected, abs=1e-15)
    # the quoted 5-digit values agree with the direct sum to within rounding
    assert p == pytest.approx([0.49181, 0.29244, 0.21576], abs=1e-5)


def test_uniform_limit():
    assert zipf_probabilities(4, 0.0).probabilities.tolist() == [0.25] * 4


@pytest.mark.parametrize("K", [0, -1])
def test_empty_catalog_rejected(K):
    with pytest.raises(ValueError):
        zipf_probabilities(K)


def test_large_catalog_normalized():
    p = zipf_probabilities(3000, 0.75).probabilities
    assert abs(math.fsum(p) - 1.0) < 1e-12
    assert np.all(np.diff(p) < 0)


def test_zero_rate_gives_zero_batch():
    pop = zipf_probabilities(5)
    batch = generate_arrivals(node_streams(1, 3), 0.0, pop)
    assert batch.shape == (3, 5) and not batch.any()


def test_empirical_means_within_one_percent():
    pop = PopularityModel(np.array([0.7, 0.3]))
    rngs = node_streams(42, 1)
    total = np.zeros(2)
    slots = 100_000
    for _ in range(slots):
        total += generate_arrivals(rngs, 10.0, pop)[0]
    means = total / slots
    assert abs(means[0] - 7) / 7 < 0.01
    assert abs(means[1] - 3) / 3 < 0.01


def test_same_seed_same_batches():
    pop = zipf_probabilities(10)
    a = ArrivalProcess(4, 3.0, pop, seed=5, run=2)
    b = ArrivalProcess(4, 3.0, pop, seed=5, run=2)
    for _ in range(20):
        assert np.array_equal(a(), b())


def test_node_streams_independent_of_node_count():
    pop = zipf_probabilities(10)
    small = generate_arrivals(node_streams(9, 3), 2.0, pop)
    large = generate_arrivals(node_streams(9, 6), 2.0, pop)
    assert np.array_equal(small, large[:3])


def test_requesting_nodes_and_sources_are_respected():
    pop = zipf_probabilities(3, 0.0)
    rngs = node_streams(0, 3)
    sources = np.array([0, 1, 2])
    for _ in range(50):
        batch = generate_arrivals(rngs, 30.0, pop, requesting_nodes=[0, 2], sources=sources)
        assert not batch[1].any()
        assert batch[0, 0] == 0 and batch[2, 2] == 0


def test_truncation():
    pop = zipf_probabilities(2, 0.0)
    assert truncation_bound(4.0, pop, 1.0) == 2
    batch = generate_arrivals(node_streams(0, 2), 1000.0, pop, a_max=3)
    assert batch.max() <= 3


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        generate_arrivals(node_streams(0, 1), -1.0, zipf_probabilities(2))


def test_mean_rates():
    pop = zipf_probabilities(2, 0.0)
    proc = ArrivalProcess(3, 4.0, pop, seed=0, requesting_nodes=[1], sources=np.array([1, 0]))
    assert proc.mean_rates(3).tolist() == [[0, 0], [0, 2], [0, 0]]
