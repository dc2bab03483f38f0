"""DAG / CPDAG utilities: Meek closure and Markov-equivalence-class enumeration.

Graphs are square 0/1 integer matrices.  ``adj[i, j] == 1`` and
``adj[j, i] == 0`` is the directed edge ``i -> j``; both entries set encode the
undirected edge ``i - j``.
"""

from __future__ import annotations

import csv
import itertools
from pathlib import Path
from typing import Iterator

import numpy as np

DEFAULT_MEC_CAP = 10_000


class GraphError(ValueError):
    """Malformed or inconsistent graph input."""


class MecCapExceeded(GraphError):
    """The equivalence class has more members than the enumeration cap."""


def as_adjacency(adj) -> np.ndarray:
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {a.shape}")
    a = (a != 0).astype(np.int8)
    if np.any(np.diag(a)):
        raise GraphError("self loops are not allowed")
    return a


def directed_part(adj: np.ndarray) -> np.ndarray:
    a = as_adjacency(adj)
    return (a & (1 - a.T)).astype(np.int8)


def undirected_edges(adj: np.ndarray) -> list[tuple[int, int]]:
    a = as_adjacency(adj)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(a & a.T, 1)))]


def skeleton(adj: np.ndarray) -> np.ndarray:
    a = as_adjacency(adj)
    return (a | a.T).astype(np.int8)


def topological_order(adj: np.ndarray) -> list[int] | None:
    """Kahn ordering of a directed-only reading of ``adj``; ``None`` if cyclic."""
    a = np.asarray(adj) != 0
    indeg = a.sum(axis=0).astype(int)
    ready = sorted(int(i) for i in np.flatnonzero(indeg == 0))
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for k in np.flatnonzero(a[i]):
            indeg[k] -= 1
            if indeg[k] == 0:
                ready.append(int(k))
        ready.sort()
    return order if len(order) == a.shape[0] else None


def is_dag(adj) -> bool:
    """True iff the directed reading of ``adj`` (every 1 is an arc) is acyclic."""
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {a.shape}")
    return topological_order(a) is not None


def v_structures(adj: np.ndarray) -> set[tuple[int, int, int]]:
    """Colliders ``i -> k <- j`` with ``i < j`` nonadjacent, from directed edges only."""
    a = as_adjacency(adj)
    d = a & (1 - a.T)
    adjacent = (a | a.T).astype(bool)
    out = set()
    for k in range(a.shape[0]):
        pa = np.flatnonzero(d[:, k])
        for i, j in itertools.combinations(pa, 2):
            if not adjacent[i, j]:
                out.add((int(i), int(k), int(j)))
    return out


def parents_of(g: np.ndarray, j: int) -> tuple[int, ...]:
    """Directed parents of node ``j``."""
    a = as_adjacency(g)
    if not 0 <= j < a.shape[0]:
        raise GraphError(f"node {j} out of range")
    return tuple(int(i) for i in np.flatnonzero(a[:, j] & (1 - a[j, :])))


def _orient(a: np.ndarray, i: int, j: int) -> None:
    a[i, j] = 1
    a[j, i] = 0


def meek_closure(pdag) -> np.ndarray:
    """Apply Meek rules R1-R4 until no undirected edge can be oriented.

    Raises :class:`GraphError` if the input's directed part is cyclic or a rule
    would close a directed cycle.
    """
    a = as_adjacency(pdag).copy()
    if topological_order(a & (1 - a.T)) is None:
        raise GraphError("directed part of the input is cyclic")
    while True:
        edge = _first_meek_orientation(a)
        if edge is None:
            return a
        _orient(a, *edge)
        if topological_order(a & (1 - a.T)) is None:
            raise GraphError("Meek closure produced a directed cycle")


def _first_meek_orientation(a: np.ndarray) -> tuple[int, int] | None:
    und = a & a.T
    dirc = a & (1 - a.T)
    adjm = (a | a.T).astype(bool)
    for i, j in zip(*np.nonzero(und)):
        i, j = int(i), int(j)
        # R1: k -> i - j with k, j nonadjacent
        if any(not adjm[k, j] for k in np.flatnonzero(dirc[:, i])):
            return i, j
        # R2: i -> k -> j
        if np.any(dirc[i, :] & dirc[:, j]):
            return i, j
        # R3: i - k -> j and i - l -> j with k, l nonadjacent
        ks = np.flatnonzero(und[i, :] & dirc[:, j])
        if any(not adjm[k, l] for k, l in itertools.combinations(ks, 2)):
            return i, j
        # R4: i - k -> l -> j with k, j nonadjacent and i adjacent to l
        for k in np.flatnonzero(und[i, :]):
            if k == j or adjm[k, j]:
                continue
            if any(adjm[i, l] for l in np.flatnonzero(dirc[k, :] & dirc[:, j])):
                return i, j
    return None


def cpdag_of_dag(g) -> np.ndarray:
    """CPDAG of the equivalence class containing DAG ``g``."""
    a = as_adjacency(g)
    if np.any(a & a.T) or not is_dag(a):
        raise GraphError("input is not a DAG")
    out = skeleton(a)
    for i, k, j in sorted(v_structures(a)):
        _orient(out, i, k)
        _orient(out, j, k)
    return meek_closure(out)


def _is_consistent_extension(dag: np.ndarray, ref_skel: np.ndarray, ref_vs: set) -> bool:
    return (topological_order(dag) is not None
            and np.array_equal(skeleton(dag), ref_skel)
            and v_structures(dag) == ref_vs)


def _sort_members(members: list[np.ndarray]) -> list[np.ndarray]:
    return sorted(members, key=lambda m: tuple(m.ravel().tolist()))


def enumerate_mec(c, cap: int = DEFAULT_MEC_CAP) -> list[np.ndarray]:
    """All consistent DAG extensions of a (partially directed) graph.

    Recursion orients the lexicographically first undirected edge both ways
    and re-closes under Meek rules; branches whose closure fails are pruned.
    Leaves are kept when acyclic with the reference skeleton and v-structures.
    """
    ref = as_adjacency(c)
    if topological_order(ref & (1 - ref.T)) is None:
        raise GraphError("directed part of the input is cyclic")
    ref_skel = skeleton(ref)
    ref_vs = v_structures(ref)
    members: list[np.ndarray] = []

    def walk(pdag: np.ndarray) -> None:
        try:
            closed = meek_closure(pdag)
        except GraphError:
            return
        und = undirected_edges(closed)
        if not und:
            if _is_consistent_extension(closed, ref_skel, ref_vs):
                members.append(closed)
                if len(members) > cap:
                    raise MecCapExceeded(f"equivalence class exceeds cap of {cap} members")
            return
        i, j = und[0]
        for src, dst in ((i, j), (j, i)):
            nxt = closed.copy()
            _orient(nxt, src, dst)
            walk(nxt)

    walk(ref)
    return _sort_members(members)


def brute_force_mec(c, max_undirected: int = 20) -> list[np.ndarray]:
    """Exhaustive 2^k orientation search; reference oracle for :func:`enumerate_mec`."""
    ref = as_adjacency(c)
    und = undirected_edges(ref)
    if len(und) > max_undirected:
        raise GraphError(f"{len(und)} undirected edges exceed brute-force limit {max_undirected}")
    ref_skel = skeleton(ref)
    ref_vs = v_structures(ref)
    out = []
    for bits in itertools.product((0, 1), repeat=len(und)):
        g = ref.copy()
        for (i, j), b in zip(und, bits):
            if b:
                _orient(g, j, i)
            else:
                _orient(g, i, j)
        if _is_consistent_extension(g, ref_skel, ref_vs):
            out.append(g)
    return _sort_members(out)


def mediator_subgraph(c, t: int, p: int) -> np.ndarray:
    """Sub-adjacency over mediator nodes ``t .. t+p-1`` (0-based)."""
    a = as_adjacency(c)
    if t < 1 or p < 1 or a.shape[0] < t + p + 1:
        raise GraphError(f"graph with {a.shape[0]} nodes cannot hold t={t}, p={p} plus an outcome")
    return a[t:t + p, t:t + p].copy()


def parent_set_counts(members: list[np.ndarray], j: int) -> list[tuple[tuple[int, ...], int]]:
    """Distinct parent sets of node ``j`` across MEC members with multiplicities."""
    counts: dict[tuple[int, ...], int] = {}
    for g in members:
        key = parents_of(g, j)
        counts[key] = counts.get(key, 0) + 1
    return sorted(counts.items())


def iter_random_dags(d: int, edge_prob: float, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless stream of random DAGs over ``d`` nodes (random topological order)."""
    while True:
        perm = rng.permutation(d)
        g = np.zeros((d, d), dtype=np.int8)
        for u, v in itertools.combinations(range(d), 2):
            if rng.random() < edge_prob:
                g[perm[u], perm[v]] = 1
        yield g


def read_adjacency_csv(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    try:
        a = np.array([[int(x) for x in r] for r in rows])
    except ValueError as exc:
        raise GraphError(f"{path}: adjacency entries must be 0/1 integers") from exc
    if a.size and not np.isin(a, (0, 1)).all():
        raise GraphError(f"{path}: adjacency entries must be 0/1 integers")
    return as_adjacency(a)


def write_adjacency_csv(adj: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in as_adjacency(adj):
            writer.writerow([int(v) for v in row])
