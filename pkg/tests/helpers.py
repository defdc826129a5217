"""Shared brute-force oracles and random-graph helpers for the test suite.

Everything here is deliberately independent of the library's own search and
solver code paths: oracles enumerate permutations or average over the whole
group directly.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from ngn.graph_core import ConcreteGraph, GraphIso, from_undirected


def brute_isos(a: ConcreteGraph, b: ConcreteGraph, pins=()) -> list[dict[int, int]]:
    """All edge-preserving bijections a -> b honoring pins, by full enumeration."""
    if a.n != b.n or len(a.edges) != len(b.edges):
        return []
    out = []
    for perm in permutations(b.nodes):
        m = dict(zip(a.nodes, perm))
        if any(m[u] != v for u, v in pins):
            continue
        if all((m[i], m[j]) in b.edges for i, j in a.edges):
            out.append(m)
    return out


def brute_automorphisms(g: ConcreteGraph, marked=()) -> list[dict[int, int]]:
    return brute_isos(g, g, pins=[(m, m) for m in marked])


def random_graph(rng: np.random.Generator, n: int, p: float, id_offset: int = 0) -> ConcreteGraph:
    """Symmetrized G(n, p) on ids offset..offset+n-1."""
    nodes = [id_offset + i for i in range(n)]
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                pairs.append((nodes[i], nodes[j]))
    return from_undirected(nodes, pairs)


def random_relabeling(rng: np.random.Generator, g: ConcreteGraph, fresh_ids: bool = False) -> GraphIso:
    """A random bijection from g onto a relabeled copy of itself."""
    if fresh_ids:
        new_ids = [int(x) for x in rng.choice(1000, size=g.n, replace=False)]
    else:
        new_ids = [int(x) for x in rng.permutation(list(g.nodes))]
    mapping = dict(zip(g.nodes, new_ids))
    return GraphIso.build(g, g.relabel(mapping), mapping)


def group_average_projector(ec, rho, rho_prime) -> np.ndarray:
    """Brute-force projector onto constraint solutions: average over the whole
    group of the action k -> Q k P^{-1}, i.e. (1/|A|) sum kron(Q, P) on
    row-major vec(k). Independent of the SVD nullspace route."""
    from ngn.representations import rep_matrix

    mats = []
    for chi_tail, chi_head in ec.group_restrictions:
        p_mat = rep_matrix(rho, chi_tail).entries
        q_mat = rep_matrix(rho_prime, chi_head).entries
        mats.append(np.kron(q_mat, p_mat))
    return sum(mats) / len(mats)


def projector_rank(proj: np.ndarray) -> int:
    # a projector's rank equals its trace; rounding guards float dust
    return int(round(float(np.trace(proj))))


def edge_iso_with_restrictions(rng: np.random.Generator, g: ConcreteGraph, p: int, q: int):
    """A random relabeling of an edge neighbourhood plus its ball restrictions."""
    from ngn.neighbourhoods import (
        EdgeNeighbourhood,
        NeighbourhoodAssignment,
        edge_neighbourhood,
        restrict_edge_iso,
    )

    k1 = NeighbourhoodAssignment(1)
    nb = edge_neighbourhood(g, p, q, k1)
    new_ids = [int(x) for x in rng.choice(500, size=nb.graph.n, replace=False)]
    mapping = dict(zip(nb.graph.nodes, new_ids))
    target_graph = nb.graph.relabel(mapping)
    psi = GraphIso.build(nb.graph, target_graph, mapping)
    target_nb = EdgeNeighbourhood(target_graph, (mapping[p], mapping[q]))
    psi_tail = restrict_edge_iso(psi, nb, target_nb, "tail", k1)
    psi_head = restrict_edge_iso(psi, nb, target_nb, "head", k1)
    return nb, target_nb, psi, psi_tail, psi_head


def make_synthetic_tu(tmp_dir, n_graphs: int = 120, seed: int = 0):
    """Write a deterministic two-class dataset in the benchmark text format.

    Class 0 graphs are sparse rings with pendants; class 1 graphs carry
    chords (triangles). Node labels mark high-degree nodes, exercising the
    one-hot feature path. Returns the dataset directory.
    """
    from pathlib import Path

    from ngn.datasets import GraphDataset, write_tu
    from ngn.graph_core import from_undirected

    rng = np.random.default_rng(seed)
    graphs, labels, node_labels = [], [], []
    for i in range(n_graphs):
        n_ring = int(rng.integers(10, 16))
        pairs = [(j, (j + 1) % n_ring) for j in range(n_ring)]
        n = n_ring
        for _ in range(int(rng.integers(2, 5))):  # pendants
            anchor = int(rng.integers(n_ring))
            pairs.append((anchor, n))
            n += 1
        label = i % 2
        if label == 1:  # chords create triangles
            for _ in range(int(rng.integers(2, 4))):
                a = int(rng.integers(n_ring))
                pairs.append((a, (a + 2) % n_ring))
        g = from_undirected(range(n), set(map(lambda e: tuple(sorted(e)), pairs)))
        graphs.append(g)
        labels.append(label)
        node_labels.append([1 if len(g.und_nbrs[u]) >= 3 else 0 for u in g.nodes])
    ds = GraphDataset(
        "SYNTH", graphs, np.array(labels, dtype=np.intp), 2, node_labels=node_labels
    )
    out = Path(tmp_dir) / "SYNTH"
    write_tu(ds, out)
    return out


def finite_difference_grads(loss_fn, params: dict, rel_h: float = 1e-6) -> dict:
    """Central-difference gradients of a scalar loss over named Tensors.

    ``loss_fn`` must rebuild the forward pass from the current param values
    on every call. Step size is rel_h scaled by each entry's magnitude.
    """
    out = {}
    for name, p in params.items():
        grad = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = rel_h * max(1.0, abs(orig))
            flat[i] = orig + h
            up = float(loss_fn())
            flat[i] = orig - h
            down = float(loss_fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        out[name] = grad
    return out


def path_graph(*ids: int) -> ConcreteGraph:
    return from_undirected(ids, list(zip(ids, ids[1:])))


def cycle_graph(*ids: int) -> ConcreteGraph:
    pairs = list(zip(ids, ids[1:])) + [(ids[-1], ids[0])]
    return from_undirected(ids, pairs)


def complete_graph(*ids: int) -> ConcreteGraph:
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
    return from_undirected(ids, pairs)
