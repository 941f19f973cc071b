import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csa_mimo import mac
from csa_mimo.logicalbench import ResourceGraph, decode_no_sic, peel_with_sic

DATA = Path(__file__).parent / "data"


def load_showcase() -> ResourceGraph:
    text = (DATA / "peeling_showcase.txt").read_text()
    return ResourceGraph(mac.parse_allocation(text))


def test_showcase_peeling_waves_and_order():
    g = load_showcase()
    order, waves = peel_with_sic(g)
    assert order == [2, 6, 8, 4, 7, 5, 1, 3]
    assert waves == [[2, 6, 8, 4], [7, 5], [1, 3]]
    assert set(order) == set(range(1, 9))


def test_showcase_no_sic_set():
    g = load_showcase()
    assert decode_no_sic(g) == {2, 4, 6, 8}


def test_showcase_user_8_counted_once_despite_two_clean_replicas():
    g = load_showcase()
    order, waves = peel_with_sic(g)
    assert order.count(8) == 1
    assert sum(w.count(8) for w in waves) == 1


def test_two_user_cycle_is_a_stopping_set():
    g = ResourceGraph({0: [(0, 0), (1, 1)], 1: [(0, 0), (1, 1)]})
    order, waves = peel_with_sic(g)
    assert order == [] and waves == []
    assert decode_no_sic(g) == set()


def test_all_degree_one_graph_decodes_everyone_in_one_wave():
    g = ResourceGraph({u: [(u, 0), (u, 1)] for u in range(4)})
    order, waves = peel_with_sic(g)
    assert set(order) == set(range(4))
    assert len(waves) == 1
    assert decode_no_sic(g) == set(range(4))


def test_from_allocation_skips_suppressed_replicas():
    cfg = mac.FrameConfig(n_slots=6, n_pilots=2, repetitions=3, k_active=2, protocol="sc_ack")
    alloc = mac.place_spatially_coupled(cfg, np.random.default_rng(0))
    mac.apply_ack(alloc, 0, int(alloc.slots[0, 0]))
    g = ResourceGraph.from_allocation(alloc)
    assert len(g.edges[0]) == 1
    assert len(g.edges[1]) == 3


@settings(max_examples=80)
@given(
    k=st.integers(0, 12),
    n_slots=st.integers(1, 6),
    n_pilots=st.integers(1, 3),
    seed=st.integers(0, 2**20),
)
def test_no_sic_decodes_subset_of_sic(k, n_slots, n_pilots, seed):
    cfg = mac.FrameConfig(n_slots, n_pilots, min(2, n_slots), k)
    alloc = mac.place_uniform(cfg, np.random.default_rng(seed))
    g = ResourceGraph.from_allocation(alloc)
    order, _ = peel_with_sic(g)
    assert decode_no_sic(g) <= set(order)


def _peel_any_order(edges: dict, pick) -> set:
    """One-at-a-time peeling with an arbitrary singleton selection policy."""
    live: dict = {}
    for u, rs in edges.items():
        for r in rs:
            live.setdefault(r, set()).add(u)
    decoded: set = set()
    while True:
        singles = [next(iter(us)) for us in live.values() if len(us) == 1]
        singles = [u for u in singles if u not in decoded]
        if not singles:
            return decoded
        u = pick(singles)
        decoded.add(u)
        for r in edges[u]:
            live[r].discard(u)


def test_peeled_set_invariant_over_all_small_graphs():
    """Exhaustive check on a 4-slot, 2-pilot grid with up to 5 users.

    Every user takes either one resource or two resources in distinct
    slots; graphs are enumerated up to user relabelling.  The decoded set
    from wave peeling must match one-at-a-time peeling under adversarial
    (max-id first) and randomized selection orders.
    """
    resources = [(s, p) for s in range(4) for p in range(2)]
    placements = [(r,) for r in resources] + [
        (a, b) for a, b in itertools.combinations(resources, 2) if a[0] != b[0]
    ]
    rng = np.random.default_rng(0)
    checked = 0
    for k in range(6):
        for combo in itertools.combinations_with_replacement(range(len(placements)), k):
            edges = {u: list(placements[i]) for u, i in enumerate(combo)}
            g = ResourceGraph(edges)
            order, waves = peel_with_sic(g)
            wave_set = set(order)
            assert wave_set == _peel_any_order(edges, max)
            assert wave_set == _peel_any_order(edges, lambda s: s[rng.integers(len(s))])
            assert all(waves) and sum(len(w) for w in waves) == len(order)
            checked += 1
    assert checked > 100000
