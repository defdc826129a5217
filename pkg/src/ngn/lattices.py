"""Periodic lattice patches used by the reduction checks and the benchmark."""

from __future__ import annotations

from .errors import ContractError
from .graph_core import ConcreteGraph, from_undirected


def _torus_graph(m: int, offsets: list[tuple[int, int]]) -> ConcreteGraph:
    if m < 5:
        raise ContractError("torus side must be at least 5 so 1-balls do not wrap onto themselves")
    pairs = []
    for i in range(m):
        for j in range(m):
            v = i * m + j
            for di, dj in offsets:
                w = ((i + di) % m) * m + (j + dj) % m
                pairs.append((v, w))
    return from_undirected(range(m * m), pairs)


def triangular_torus(m: int) -> ConcreteGraph:
    """Triangular lattice on a torus, axial coordinates, degree 6."""
    return _torus_graph(m, [(1, 0), (0, 1), (1, -1)])


def square_torus(m: int) -> ConcreteGraph:
    """Plain square lattice on a torus, degree 4."""
    return _torus_graph(m, [(1, 0), (0, 1)])


def king_torus(m: int) -> ConcreteGraph:
    """Square lattice with both diagonals on a torus, degree 8."""
    return _torus_graph(m, [(1, 0), (0, 1), (1, 1), (1, -1)])
