import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qrmed.graph import (GraphError, MecCapExceeded, brute_force_mec, cpdag_of_dag, enumerate_mec, is_dag,
                         iter_random_dags, meek_closure, mediator_subgraph, parents_of, read_adjacency_csv,
                         skeleton, v_structures, write_adjacency_csv)


def adj(d, *edges, undirected=()):
    a = np.zeros((d, d), dtype=np.int8)
    for i, j in edges:
        a[i, j] = 1
    for i, j in undirected:
        a[i, j] = a[j, i] = 1
    return a


@st.composite
def dags(draw, max_d=6):
    d = draw(st.integers(1, max_d))
    perm = draw(st.permutations(range(d)))
    a = np.zeros((d, d), dtype=np.int8)
    for u, v in itertools.combinations(range(d), 2):
        if draw(st.booleans()):
            a[perm[u], perm[v]] = 1
    return a


def as_set(members):
    return {m.tobytes() for m in members}


def test_is_dag_examples():
    assert is_dag(adj(2, (0, 1)))
    assert not is_dag(adj(2, (0, 1), (1, 0)))
    assert is_dag(np.zeros((5, 5), dtype=np.int8))
    with pytest.raises(GraphError):
        is_dag(np.zeros((2, 3)))


def test_cpdag_of_dag_examples():
    assert np.array_equal(cpdag_of_dag(adj(3, (0, 1), (1, 2))), adj(3, undirected=[(0, 1), (1, 2)]))
    collider = adj(3, (0, 1), (2, 1))
    assert np.array_equal(cpdag_of_dag(collider), collider)
    assert np.array_equal(cpdag_of_dag(adj(2, (0, 1))), adj(2, undirected=[(0, 1)]))


def test_meek_rule_examples():
    r1 = meek_closure(adj(3, (0, 1), undirected=[(1, 2)]))
    assert r1[1, 2] == 1 and r1[2, 1] == 0
    r2 = meek_closure(adj(3, (0, 1), (1, 2), undirected=[(0, 2)]))
    assert r2[0, 2] == 1 and r2[2, 0] == 0
    closed = cpdag_of_dag(adj(4, (0, 1), (2, 1), (1, 3)))
    assert np.array_equal(meek_closure(closed), closed)


def test_meek_rejects_directed_cycle():
    with pytest.raises(GraphError):
        meek_closure(adj(3, (0, 1), (1, 2), (2, 0)))


def test_enumerate_examples():
    assert len(enumerate_mec(adj(2, undirected=[(0, 1)]))) == 2
    assert len(enumerate_mec(adj(3, undirected=[(0, 1), (1, 2), (0, 2)]))) == 6
    full = adj(3, (0, 1), (2, 1))
    (only,) = enumerate_mec(full)
    assert np.array_equal(only, full)


def test_enumerate_deterministic_sorted():
    c = adj(4, undirected=[(0, 1), (1, 2), (2, 3), (0, 3)])
    a, b = enumerate_mec(c), enumerate_mec(c)
    keys = [tuple(m.ravel()) for m in a]
    assert keys == sorted(keys) and all(np.array_equal(x, y) for x, y in zip(a, b))


def test_enumerate_cap():
    c = np.ones((6, 6), dtype=np.int8) - np.eye(6, dtype=np.int8)
    with pytest.raises(MecCapExceeded):
        enumerate_mec(c, cap=100)


def test_brute_force_limit():
    c = np.ones((8, 8), dtype=np.int8) - np.eye(8, dtype=np.int8)
    with pytest.raises(GraphError):
        brute_force_mec(c)


@given(dags())
def test_member_round_trip(g):
    assert as_set([g]) <= as_set(enumerate_mec(cpdag_of_dag(g)))


@given(dags(max_d=5))
def test_enumerate_equals_brute_force(g):
    c = cpdag_of_dag(g)
    members = enumerate_mec(c)
    assert as_set(members) == as_set(brute_force_mec(c))
    assert len(as_set(members)) == len(members)
    sk, vs = skeleton(c), v_structures(c)
    for m in members:
        assert is_dag(m) and np.array_equal(skeleton(m), sk) and v_structures(m) == vs


@given(dags())
def test_meek_idempotent_and_monotone(g):
    c = cpdag_of_dag(g)
    assert np.array_equal(meek_closure(c), c)
    pdag = skeleton(g).astype(np.int8)
    for i, k, j in v_structures(g):
        pdag[k, i] = pdag[k, j] = 0
    directed = (pdag == 1) & (pdag.T == 0)
    closed = meek_closure(pdag)
    assert np.all(closed[directed] == 1) and np.all(closed.T[directed] == 0)
    assert np.array_equal(closed, c)


def test_parents_of_examples(rng):
    assert parents_of(adj(3, (0, 1), (2, 1)), 1) == (0, 2)
    assert parents_of(adj(3, (0, 1), (1, 2)), 0) == ()
    g = next(iter_random_dags(5, 0.5, rng))
    for j in range(5):
        assert parents_of(g, j) == tuple(int(i) for i in np.flatnonzero(g[:, j]))


def test_mediator_subgraph():
    c = np.zeros((6, 6), dtype=np.int8)
    c[0, 1] = 1
    c[2, 3] = c[3, 2] = 1
    block = mediator_subgraph(c, 2, 3)
    assert block.shape == (3, 3) and block[0, 1] == block[1, 0] == 1
    assert not mediator_subgraph(np.zeros((6, 6), dtype=np.int8), 2, 3).any()
    with pytest.raises(GraphError):
        mediator_subgraph(c, 3, 3)


def test_adjacency_csv_round_trip(tmp_path, rng):
    g = cpdag_of_dag(next(iter_random_dags(5, 0.6, rng)))
    write_adjacency_csv(g, tmp_path / "g.csv")
    assert np.array_equal(read_adjacency_csv(tmp_path / "g.csv"), g)
    (tmp_path / "bad.csv").write_text("0,2\n0,0\n")
    with pytest.raises(GraphError):
        read_adjacency_csv(tmp_path / "bad.csv")
