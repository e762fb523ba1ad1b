import json
import math

import numpy as np
import pytest

from levyhazard.exceptions import EnumerationCapError
from levyhazard.partitions import (
    NEW,
    Partition,
    crp_predictives,
    enumerate_partitions,
    esf_eppf,
    esf_log_prob,
)

from conftest import bell_numbers


def test_enumeration_counts_match_bell_triangle():
    bells = bell_numbers(8)
    for n in range(1, 9):
        assert sum(1 for _ in enumerate_partitions(n)) == bells[n - 1]


def test_enumeration_examples():
    assert len(list(enumerate_partitions(1))) == 1
    assert len(list(enumerate_partitions(3))) == 5
    assert len(list(enumerate_partitions(5))) == 52


def test_enumeration_unique_and_canonical():
    seen = set(enumerate_partitions(6))
    assert len(seen) == 203


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        list(enumerate_partitions(11))
    # explicit cap override is allowed
    assert sum(1 for _ in enumerate_partitions(11, cap=11)) == 678570


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition(((0, 1), (1, 2)))  # overlap
    with pytest.raises(ValueError):
        Partition(((0,), (3,)))  # gap
    with pytest.raises(ValueError):
        Partition(((1, 0),))  # unsorted cell
    with pytest.raises(ValueError):
        Partition(((2,), (0, 1)))  # not order-of-appearance


def test_from_values_ties():
    p = Partition.from_values([3.0, 1.0, 3.0, 2.0])
    assert p.cells == ((0, 2), (1,), (3,))
    assert p.sizes == (2, 1, 1)


def test_grow():
    p = Partition(((0,),))
    assert p.grow(NEW).cells == ((0,), (1,))
    assert p.grow(0).cells == ((0, 1),)
    with pytest.raises(IndexError):
        p.grow(1)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_grow_reaches_every_partition_once(n):
    frontier = [Partition(((0,),))]
    for _ in range(n - 1):
        nxt = []
        for p in frontier:
            nxt.extend(p.grow(j) for j in range(p.num_cells))
            nxt.append(p.grow(NEW))
        frontier = nxt
    assert sorted(frontier, key=lambda p: p.cells) == sorted(
        enumerate_partitions(n), key=lambda p: p.cells
    )


def test_esf_singleton_is_certain():
    assert esf_log_prob(Partition(((0,),)), 0.7) == pytest.approx(0.0, abs=1e-14)


def test_esf_direct_value():
    # theta=1, partition {{0,1},{2}}: 1^2 * Gamma(1)/Gamma(4) * 1! * 0! = 1/6
    p = Partition(((0, 1), (2,)))
    assert esf_log_prob(p, 1.0) == pytest.approx(math.log(1.0 / 6.0), abs=1e-12)


def test_esf_rejects_bad_theta():
    with pytest.raises(ValueError):
        esf_log_prob(Partition(((0,),)), 0.0)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("n", range(1, 9))
def test_esf_normalizes(theta, n):
    total = sum(math.exp(esf_log_prob(p, theta)) for p in enumerate_partitions(n))
    assert total == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("n", range(1, 9))
def test_crp_predictives_match_esf_closed_form(theta, n):
    eppf = esf_eppf(theta)
    for p in enumerate_partitions(n):
        q0, q = crp_predictives(eppf, p)
        assert abs(q0 - theta / (theta + n)) < 1e-12
        for e_j, q_j in zip(p.sizes, q):
            assert abs(q_j - e_j / (theta + n)) < 1e-12


@pytest.mark.parametrize("n", range(1, 7))
def test_crp_predictives_additivity(n):
    eppf = esf_eppf(1.3)
    for p in enumerate_partitions(n):
        q0, q = crp_predictives(eppf, p)
        assert q0 + q.sum() == pytest.approx(1.0, abs=1e-12)


def test_crp_rejects_zero_probability_condition():
    with pytest.raises(ValueError):
        crp_predictives(lambda p: 0.0, Partition(((0,),)))


def test_crp_sequential_sampling_matches_esf():
    """Seating n=4 customers by the ESF prediction rule reproduces the ESF
    within 3 Monte Carlo standard errors."""
    theta = 1.0
    n, reps = 4, 100_000
    rng = np.random.default_rng(1234)
    eppf = esf_eppf(theta)
    parts = list(enumerate_partitions(n))
    index = {p: i for i, p in enumerate(parts)}
    counts = np.zeros(len(parts))
    for _ in range(reps):
        p = Partition(((0,),))
        for _ in range(n - 1):
            q0, q = crp_predictives(eppf, p)
            u = rng.random()
            if u < q0:
                p = p.grow(NEW)
            else:
                j = int(np.searchsorted(np.cumsum(q), u - q0))
                p = p.grow(min(j, p.num_cells - 1))
        counts[index[p]] += 1
    freq = counts / reps
    probs = np.array([math.exp(esf_log_prob(p, theta)) for p in parts])
    se = np.sqrt(probs * (1 - probs) / reps)
    assert np.all(np.abs(freq - probs) <= 3.0 * se + 1e-12)


def test_json_round_trip():
    p = Partition(((0, 2), (1,), (3, 4)))
    text = p.to_json()
    assert json.loads(text) == [[0, 2], [1], [3, 4]]
    assert Partition.from_json(text) == p
