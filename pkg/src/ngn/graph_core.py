"""Concrete graphs, isomorphisms, canonical forms, and automorphism groups.

Everything here is exact. Canonical labeling uses equitable refinement
(degree / neighbour-degree partitioning) with backtracking over the smallest
non-singleton cell; isomorphism and automorphism search use the same
refinement in lockstep on both graphs. This is feasible because the graphs
this package canonicalizes are small: k-hop neighbourhoods and desk-scale
benchmark graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import CapacityError, NodeLookupError, ValidationError

SIZE_CAP = 64
GROUP_ORDER_CAP = 10080


@dataclass(frozen=True)
class ConcreteGraph:
    """A finite node set (natural-number ids, possibly non-contiguous) plus
    a set of directed edges between them.

    Undirected graphs are stored with both orientations of every edge
    present; see :func:`from_undirected`.
    """

    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    @staticmethod
    def build(
        nodes: Iterable[int],
        edges: Iterable[tuple[int, int]],
        allow_self_loops: bool = False,
    ) -> "ConcreteGraph":
        node_tuple = tuple(sorted(set(int(v) for v in nodes)))
        if any(v < 0 for v in node_tuple):
            raise ValidationError("node ids must be natural numbers")
        node_set = set(node_tuple)
        edge_set = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i not in node_set or j not in node_set:
                raise ValidationError(f"edge ({i}, {j}) has an endpoint outside the node set")
            if i == j and not allow_self_loops:
                raise ValidationError(f"self-loop ({i}, {i}) rejected")
            edge_set.add((i, j))
        return ConcreteGraph(node_tuple, frozenset(edge_set))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def node_set(self) -> frozenset[int]:
        return frozenset(self.nodes)

    @cached_property
    def out_nbrs(self) -> dict[int, frozenset[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.nodes}
        for i, j in self.edges:
            adj[i].add(j)
        return {v: frozenset(s) for v, s in adj.items()}

    @cached_property
    def in_nbrs(self) -> dict[int, frozenset[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.nodes}
        for i, j in self.edges:
            adj[j].add(i)
        return {v: frozenset(s) for v, s in adj.items()}

    @cached_property
    def und_nbrs(self) -> dict[int, frozenset[int]]:
        """Neighbours ignoring edge direction."""
        return {v: self.out_nbrs[v] | self.in_nbrs[v] for v in self.nodes}

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edges

    def subgraph(self, keep: Iterable[int]) -> "ConcreteGraph":
        """Induced subgraph on ``keep``, inheriting parent ids."""
        keep_set = set(keep)
        missing = keep_set - set(self.nodes)
        if missing:
            raise NodeLookupError(f"nodes {sorted(missing)} not in graph")
        edges = [(i, j) for (i, j) in self.edges if i in keep_set and j in keep_set]
        return ConcreteGraph(tuple(sorted(keep_set)), frozenset(edges))

    def relabel(self, mapping: Mapping[int, int]) -> "ConcreteGraph":
        """Apply a node bijection, producing the image graph."""
        if set(mapping) != set(self.nodes) or len(set(mapping.values())) != self.n:
            raise ValidationError("relabeling must be a bijection defined on all nodes")
        nodes = tuple(sorted(mapping[v] for v in self.nodes))
        edges = frozenset((mapping[i], mapping[j]) for (i, j) in self.edges)
        return ConcreteGraph(nodes, edges)


def from_undirected(nodes: Iterable[int], pairs: Iterable[tuple[int, int]]) -> ConcreteGraph:
    """Build a symmetrized graph: both orientations of every pair."""
    sym = []
    for i, j in pairs:
        sym.append((i, j))
        sym.append((j, i))
    return ConcreteGraph.build(nodes, sym)


@dataclass(frozen=True)
class GraphIso:
    """A node bijection between two concrete graphs.

    The structure itself does not guarantee edge preservation; use
    :func:`validate_iso` to check it.
    """

    source: ConcreteGraph
    target: ConcreteGraph
    mapping: tuple[tuple[int, int], ...]

    @staticmethod
    def build(source: ConcreteGraph, target: ConcreteGraph, mapping: Mapping[int, int]) -> "GraphIso":
        return GraphIso(source, target, tuple(sorted(mapping.items())))

    @staticmethod
    def identity(g: ConcreteGraph) -> "GraphIso":
        return GraphIso(g, g, tuple((v, v) for v in g.nodes))

    @cached_property
    def map(self) -> dict[int, int]:
        return dict(self.mapping)

    def apply(self, v: int) -> int:
        try:
            return self.map[v]
        except KeyError:
            raise NodeLookupError(f"node {v} not in isomorphism domain") from None

    def inverse(self) -> "GraphIso":
        return GraphIso(self.target, self.source, tuple(sorted((j, i) for i, j in self.mapping)))

    def compose(self, other: "GraphIso") -> "GraphIso":
        """Return self after other (``self ∘ other``)."""
        if other.target.nodes != self.source.nodes or other.target.edges != self.source.edges:
            raise ValidationError("composition requires other.target == self.source")
        return GraphIso(
            other.source,
            self.target,
            tuple(sorted((v, self.map[w]) for v, w in other.mapping)),
        )

    def is_identity(self) -> bool:
        return all(i == j for i, j in self.mapping)


def validate_iso(candidate: GraphIso) -> bool:
    """True iff the bijection preserves edges in both directions.

    Raises ValidationError for structurally malformed maps (wrong domain,
    non-bijective, unknown ids); that is distinct from returning False.
    """
    src, tgt = candidate.source, candidate.target
    m = candidate.map
    if set(m) != set(src.nodes):
        raise ValidationError("map domain does not equal source node set")
    values = set(m.values())
    if len(values) != len(m):
        raise ValidationError("map is not injective")
    if values != set(tgt.nodes):
        raise ValidationError("map image does not equal target node set")
    for i, j in src.edges:
        if (m[i], m[j]) not in tgt.edges:
            return False
    if len(src.edges) != len(tgt.edges):
        return False
    return True


# ---------------------------------------------------------------------------
# Equitable refinement and canonical labeling
# ---------------------------------------------------------------------------


def _signature(g: ConcreteGraph, v: int, cell_index: dict[int, int]) -> tuple:
    counts: dict[int, list[int]] = {}
    for w in g.out_nbrs[v]:
        c = counts.setdefault(cell_index[w], [0, 0])
        c[0] += 1
    for w in g.in_nbrs[v]:
        c = counts.setdefault(cell_index[w], [0, 0])
        c[1] += 1
    return tuple(sorted((ci, c[0], c[1]) for ci, c in counts.items()))


def _refine(g: ConcreteGraph, cells: list[list[int]]) -> list[list[int]]:
    """Refine an ordered partition to equitability.

    Split cells are replaced, in place in the cell order, by their
    sub-cells sorted by signature; this keeps the cell order an
    isomorphism invariant.
    """
    while True:
        cell_index = {v: i for i, cell in enumerate(cells) for v in cell}
        out: list[list[int]] = []
        changed = False
        for cell in cells:
            if len(cell) == 1:
                out.append(cell)
                continue
            groups: dict[tuple, list[int]] = {}
            for v in cell:
                groups.setdefault(_signature(g, v, cell_index), []).append(v)
            if len(groups) == 1:
                out.append(cell)
            else:
                changed = True
                for sig in sorted(groups):
                    out.append(sorted(groups[sig]))
        cells = out
        if not changed:
            return cells


def _encode(g: ConcreteGraph, order: list[int], color_rank: dict[int, int]) -> bytes:
    n = len(order)
    pos = {v: i for i, v in enumerate(order)}
    bits = bytearray((n * n + 7) // 8)
    for i, j in g.edges:
        k = pos[i] * n + pos[j]
        bits[k >> 3] |= 1 << (k & 7)
    head = bytearray()
    head += n.to_bytes(2, "big")
    for v in order:
        head += color_rank[v].to_bytes(2, "big")
    return bytes(head) + bytes(bits)


@dataclass(frozen=True)
class CanonicalForm:
    """Canonical adjacency encoding plus the relabeling that produced it.

    Two graphs (with matching colorings) have equal encodings iff they are
    isomorphic by a color-preserving isomorphism.
    """

    encoding: bytes
    relabeling: tuple[tuple[int, int], ...]  # original id -> canonical position

    @cached_property
    def relabel_map(self) -> dict[int, int]:
        return dict(self.relabeling)


def canonical_form(
    g: ConcreteGraph,
    colors: Mapping[int, int] | None = None,
    size_cap: int = SIZE_CAP,
) -> CanonicalForm:
    """Canonicalize ``g``, optionally respecting an initial node coloring.

    Colors are normalized to dense ranks, so only the partition they induce
    matters. The search individualizes vertices of the first smallest
    non-singleton cell and takes the lexicographically smallest encoding
    over all leaves, which makes the result relabeling-invariant.
    """
    if g.n > size_cap:
        raise CapacityError(f"graph has {g.n} nodes, cap is {size_cap}")
    if g.n == 0:
        return CanonicalForm(_encode(g, [], {}), ())
    if colors is None:
        colors = {v: 0 for v in g.nodes}
    else:
        missing = set(g.nodes) - set(colors)
        if missing:
            raise NodeLookupError(f"colors missing for nodes {sorted(missing)}")
    distinct = sorted(set(colors[v] for v in g.nodes))
    rank_of = {c: r for r, c in enumerate(distinct)}
    color_rank = {v: rank_of[colors[v]] for v in g.nodes}

    initial: list[list[int]] = [
        sorted(v for v in g.nodes if color_rank[v] == r) for r in range(len(distinct))
    ]

    best: list[tuple[bytes, list[int]]] = []

    def search(cells: list[list[int]]) -> None:
        cells = _refine(g, cells)
        nontrivial = [c for c in cells if len(c) > 1]
        if not nontrivial:
            order = [c[0] for c in cells]
            enc = _encode(g, order, color_rank)
            if not best or enc < best[0][0]:
                best[:] = [(enc, order)]
            return
        size = min(len(c) for c in nontrivial)
        target_at = next(i for i, c in enumerate(cells) if len(c) == size and len(c) > 1)
        target = cells[target_at]
        for v in target:
            child = (
                cells[:target_at]
                + [[v], [w for w in target if w != v]]
                + cells[target_at + 1 :]
            )
            search(child)

    search(initial)
    enc, order = best[0]
    relabeling = tuple(sorted((v, i) for i, v in enumerate(order)))
    return CanonicalForm(enc, relabeling)


# ---------------------------------------------------------------------------
# Isomorphism search (pins honored) and automorphism groups
# ---------------------------------------------------------------------------

_PairCells = list[tuple[list[int], list[int]]]


def _paired_refine(ga: ConcreteGraph, gb: ConcreteGraph, pcells: _PairCells) -> _PairCells | None:
    """Refine matched partitions of two graphs in lockstep.

    Returns None as soon as the split profiles diverge, which proves no
    isomorphism is compatible with the current cell pairing.
    """
    while True:
        index_a = {v: i for i, (ca, _) in enumerate(pcells) for v in ca}
        index_b = {v: i for i, (_, cb) in enumerate(pcells) for v in cb}
        out: _PairCells = []
        changed = False
        for ca, cb in pcells:
            if len(ca) != len(cb):
                return None
            if len(ca) == 1:
                out.append((ca, cb))
                continue
            groups_a: dict[tuple, list[int]] = {}
            for v in ca:
                groups_a.setdefault(_signature(ga, v, index_a), []).append(v)
            groups_b: dict[tuple, list[int]] = {}
            for v in cb:
                groups_b.setdefault(_signature(gb, v, index_b), []).append(v)
            if sorted(groups_a) != sorted(groups_b):
                return None
            if any(len(groups_a[s]) != len(groups_b[s]) for s in groups_a):
                return None
            if len(groups_a) == 1:
                out.append((ca, cb))
            else:
                changed = True
                for sig in sorted(groups_a):
                    out.append((sorted(groups_a[sig]), sorted(groups_b[sig])))
        pcells = out
        if not changed:
            return pcells


def _edges_preserved(ga: ConcreteGraph, gb: ConcreteGraph, m: dict[int, int]) -> bool:
    if len(ga.edges) != len(gb.edges):
        return False
    return all((m[i], m[j]) in gb.edges for i, j in ga.edges)


def _search_isos(
    ga: ConcreteGraph,
    gb: ConcreteGraph,
    pins: Sequence[tuple[int, int]],
    limit: int | None,
    cap: int | None = None,
) -> list[GraphIso]:
    """All (or the first ``limit``) isomorphisms ga -> gb honoring pins."""
    if ga.n != gb.n or len(ga.edges) != len(gb.edges):
        return []
    for u, v in pins:
        if u not in ga.node_set:
            raise NodeLookupError(f"pinned node {u} not in source graph")
        if v not in gb.node_set:
            raise NodeLookupError(f"pinned node {v} not in target graph")
    pin_a = [u for u, _ in pins]
    pin_b = [v for _, v in pins]
    if len(set(pin_a)) != len(pin_a) or len(set(pin_b)) != len(pin_b):
        return []
    rest_a = sorted(set(ga.nodes) - set(pin_a))
    rest_b = sorted(set(gb.nodes) - set(pin_b))
    pcells: _PairCells = [([u], [v]) for u, v in pins]
    if rest_a:
        pcells.append((rest_a, rest_b))

    found: list[GraphIso] = []

    def descend(cells: _PairCells) -> bool:
        refined = _paired_refine(ga, gb, cells)
        if refined is None:
            return False
        nontrivial = [(i, ca) for i, (ca, _) in enumerate(refined) if len(ca) > 1]
        if not nontrivial:
            m = {ca[0]: cb[0] for ca, cb in refined}
            if _edges_preserved(ga, gb, m):
                found.append(GraphIso.build(ga, gb, m))
                if cap is not None and len(found) > cap:
                    raise CapacityError(f"more than {cap} isomorphisms found")
                if limit is not None and len(found) >= limit:
                    return True
            return False
        size = min(len(ca) for _, ca in nontrivial)
        at = next(i for i, ca in nontrivial if len(ca) == size)
        ca, cb = refined[at]
        u = ca[0]
        rest = [w for w in ca if w != u]
        for v in cb:
            child = (
                refined[:at]
                + [([u], [v]), (rest, [w for w in cb if w != v])]
                + refined[at + 1 :]
            )
            if descend(child):
                return True
        return False

    descend(pcells)
    return found


def find_iso(
    a: ConcreteGraph,
    b: ConcreteGraph,
    pins: Sequence[tuple[int, int]] = (),
) -> GraphIso | None:
    """Some isomorphism a -> b mapping each pinned pair, or None."""
    isos = _search_isos(a, b, pins, limit=1)
    return isos[0] if isos else None


@dataclass(frozen=True)
class AutGenerators:
    """Generators of the automorphism group fixing every marked node."""

    graph: ConcreteGraph
    marked: tuple[int, ...]
    generators: tuple[GraphIso, ...]

    def order(self) -> int:
        return len(enumerate_group(self))


def automorphism_generators(
    g: ConcreteGraph,
    marked: Sequence[int] = (),
    size_cap: int = SIZE_CAP,
    order_cap: int = GROUP_ORDER_CAP,
) -> AutGenerators:
    """Generating set for the group of automorphisms fixing ``marked``.

    The full group is enumerated by refinement-pruned search and reduced
    greedily, so the generated group provably equals the full group.
    """
    if g.n > size_cap:
        raise CapacityError(f"graph has {g.n} nodes, cap is {size_cap}")
    for m in marked:
        if m not in g.node_set:
            raise NodeLookupError(f"marked node {m} not in graph")
    auts = _search_isos(g, g, [(m, m) for m in marked], limit=None, cap=order_cap)
    gens: list[GraphIso] = []
    closure_keys = {GraphIso.identity(g).mapping}
    for sigma in auts:
        if sigma.mapping in closure_keys:
            continue
        gens.append(sigma)
        closure_keys = {
            iso.mapping
            for iso in _close(g, gens, order_cap)
        }
    return AutGenerators(g, tuple(marked), tuple(gens))


def _close(g: ConcreteGraph, gens: list[GraphIso], cap: int) -> list[GraphIso]:
    identity = GraphIso.identity(g)
    seen: dict[tuple, GraphIso] = {identity.mapping: identity}
    frontier = [identity]
    while frontier:
        nxt: list[GraphIso] = []
        for h in frontier:
            for gen in gens:
                prod = gen.compose(h)
                if prod.mapping not in seen:
                    if len(seen) >= cap:
                        raise CapacityError(f"group order exceeds cap {cap}")
                    seen[prod.mapping] = prod
                    nxt.append(prod)
        frontier = nxt
    return [seen[k] for k in sorted(seen)]


def enumerate_group(gens: AutGenerators, order_cap: int = GROUP_ORDER_CAP) -> list[GraphIso]:
    """Closure of the generators under composition (identity included)."""
    return _close(gens.graph, list(gens.generators), order_cap)
