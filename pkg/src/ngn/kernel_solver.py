"""Edge-neighbourhood isomorphism classes and equivariant kernel bases.

Edges whose marked neighbourhoods are isomorphic (marks onto marks, in
orientation) share one kernel. Per class, the kernel must commute with every
marked automorphism of the representative neighbourhood; the solution space
is found as an SVD nullspace and parameterized by weights per basis element
and channel pair. Kernels at members are obtained by transporting the
representative kernel with the class isomorphism.

Vectorization convention: kernels are vectorized row-major (C order), so the
constraint contributed by an automorphism chi reads
``kron(Q, I) - kron(I, P.T)`` acting on vec(k), where Q and P are the head
and tail permutation actions. Channel multiplicities never enter the solve:
the constraint decouples per channel pair, so bases are solved once per
(kind, kind) part pair on single-channel actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NodeLookupError, ShapeError, ValidationError
from .graph_core import (
    AutGenerators,
    ConcreteGraph,
    GraphIso,
    automorphism_generators,
    canonical_form,
    enumerate_group,
)
from .neighbourhoods import (
    EdgeNeighbourhood,
    NeighbourhoodAssignment,
    edge_neighbourhood,
    node_neighbourhood,
    restrict_edge_iso,
)
from .representations import (
    RepSpec,
    rep_matrix,
    structural_dim,
    structural_perm,
)

NULLSPACE_REL_TOL = 1e-8


def _mark_colors(nb: EdgeNeighbourhood) -> dict[int, int]:
    colors = {v: 0 for v in nb.graph.nodes}
    colors[nb.marked[0]] = 1
    colors[nb.marked[1]] = 2
    return colors


def locate_edge(nb: EdgeNeighbourhood) -> tuple[bytes, dict[int, int]]:
    """Canonical key of a marked edge neighbourhood plus its relabeling.

    The relabeling maps original ids to canonical positions; its inverse is
    the transport from the class representative onto this neighbourhood.
    """
    form = canonical_form(nb.graph, colors=_mark_colors(nb))
    return form.encoding, form.relabel_map


def marked_edge_key(nb: EdgeNeighbourhood) -> bytes:
    """Canonical encoding of an edge neighbourhood with its marks as colors."""
    return locate_edge(nb)[0]


@dataclass(frozen=True)
class ClassMember:
    graph_index: int
    edge: tuple[int, int]
    transport: GraphIso  # representative graph -> member neighbourhood graph


@dataclass
class EdgeClass:
    """One isomorphism class of marked edge neighbourhoods."""

    key: bytes
    representative: EdgeNeighbourhood  # canonical copy on ids 0..n-1
    assignment: NeighbourhoodAssignment
    aut: AutGenerators  # automorphisms pinning p -> p and q -> q
    members: list[ClassMember] = field(default_factory=list)

    @cached_property
    def tail_nb(self):
        return node_neighbourhood(self.representative.graph, self.representative.marked[0], self.assignment)

    @cached_property
    def head_nb(self):
        return node_neighbourhood(self.representative.graph, self.representative.marked[1], self.assignment)

    @cached_property
    def group(self) -> list[GraphIso]:
        return enumerate_group(self.aut)

    @cached_property
    def group_restrictions(self) -> list[tuple[GraphIso, GraphIso]]:
        """(tail, head) node-ball restrictions of every group element."""
        rep = self.representative
        return [
            (
                restrict_edge_iso(chi, rep, rep, "tail", self.assignment),
                restrict_edge_iso(chi, rep, rep, "head", self.assignment),
            )
            for chi in self.group
        ]


def _class_from_neighbourhood(
    nb: EdgeNeighbourhood, key: bytes, relab: dict[int, int], a: NeighbourhoodAssignment
) -> EdgeClass:
    rep_graph = nb.graph.relabel(relab)
    rep_marked = (relab[nb.marked[0]], relab[nb.marked[1]])
    rep = EdgeNeighbourhood(rep_graph, rep_marked)
    aut = automorphism_generators(rep_graph, marked=list(rep_marked))
    return EdgeClass(key=key, representative=rep, assignment=a, aut=aut)


def _transport_from_relab(ec: EdgeClass, nb: EdgeNeighbourhood, relab: dict[int, int]) -> GraphIso:
    inverse = {pos: v for v, pos in relab.items()}
    return GraphIso.build(ec.representative.graph, nb.graph, inverse)


def transport_to(nb: EdgeNeighbourhood, ec: EdgeClass) -> GraphIso:
    """Isomorphism from the class representative onto ``nb`` (marks onto marks)."""
    key, relab = locate_edge(nb)
    if key != ec.key:
        raise NodeLookupError("neighbourhood does not belong to this class")
    return _transport_from_relab(ec, nb, relab)


def classify_edges(
    corpus: list[ConcreteGraph], a: NeighbourhoodAssignment
) -> list[EdgeClass]:
    """Partition every directed edge of the corpus into isomorphism classes."""
    classes: dict[bytes, EdgeClass] = {}
    for gi, g in enumerate(corpus):
        for p, q in sorted(g.edges):
            nb = edge_neighbourhood(g, p, q, a)
            key, relab = locate_edge(nb)
            ec = classes.get(key)
            if ec is None:
                ec = _class_from_neighbourhood(nb, key, relab, a)
                classes[key] = ec
            ec.members.append(ClassMember(gi, (p, q), _transport_from_relab(ec, nb, relab)))
    return list(classes.values())


# ---------------------------------------------------------------------------
# Constraint systems and bases
# ---------------------------------------------------------------------------


def _nullspace(rows: np.ndarray, dim: int, rel_tol: float) -> np.ndarray:
    """Orthonormal nullspace basis, rows of shape (null_dim, dim)."""
    if rows.shape[0] == 0:
        return np.eye(dim)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(dim)
    nonzero = int(np.sum(s > rel_tol * s[0]))
    return vt[nonzero:]


def _structural_rows(
    ec: EdgeClass, kind_out: str, kind_in: str
) -> tuple[np.ndarray, int, int]:
    n_in = structural_dim(kind_in, ec.tail_nb.graph.n)
    n_out = structural_dim(kind_out, ec.head_nb.graph.n)
    blocks = []
    for chi, (chi_tail, chi_head) in zip(ec.group, ec.group_restrictions):
        if chi.is_identity():
            continue
        p_mat = structural_perm(kind_in, chi_tail)
        q_mat = structural_perm(kind_out, chi_head)
        blocks.append(np.kron(q_mat, np.eye(n_in)) - np.kron(np.eye(n_out), p_mat.T))
    if not blocks:
        return np.zeros((0, n_out * n_in)), n_out, n_in
    return np.vstack(blocks), n_out, n_in


def constraint_matrix(ec: EdgeClass, rho: RepSpec, rho_prime: RepSpec) -> np.ndarray:
    """Full stacked system L vec(k) = 0 over the whole automorphism group.

    Uses the full representation matrices (channels included); row-major
    vectorization. Identity automorphisms contribute nothing and are
    dropped, so a trivial group yields a zero-row system.
    """
    d_in = sum(structural_dim(k, ec.tail_nb.graph.n) * c for k, c in rho.parts)
    d_out = sum(structural_dim(k, ec.head_nb.graph.n) * c for k, c in rho_prime.parts)
    blocks = []
    for chi, (chi_tail, chi_head) in zip(ec.group, ec.group_restrictions):
        if chi.is_identity():
            continue
        p_full = rep_matrix(rho, chi_tail).entries
        q_full = rep_matrix(rho_prime, chi_head).entries
        blocks.append(np.kron(q_full, np.eye(d_in)) - np.kron(np.eye(d_out), p_full.T))
    if not blocks:
        return np.zeros((0, d_out * d_in))
    return np.vstack(blocks)


@dataclass(frozen=True)
class PairBasis:
    out_part: int
    in_part: int
    kind_out: str
    kind_in: str
    c_out: int
    c_in: int
    elements: np.ndarray  # (r, n_out_struct, n_in_struct), orthonormal in Frobenius


@dataclass
class KernelBasis:
    """Solution basis of the class constraint for a representation pair."""

    edge_class: EdgeClass
    rho: RepSpec
    rho_prime: RepSpec
    pair_bases: tuple[PairBasis, ...]

    @property
    def rank(self) -> int:
        return sum(pb.elements.shape[0] * pb.c_in * pb.c_out for pb in self.pair_bases)

    @cached_property
    def dims(self) -> tuple[int, int]:
        n_in = self.edge_class.tail_nb.graph.n
        n_out = self.edge_class.head_nb.graph.n
        d_in = sum(structural_dim(k, n_in) * c for k, c in self.rho.parts)
        d_out = sum(structural_dim(k, n_out) * c for k, c in self.rho_prime.parts)
        return d_out, d_in

    def _offsets(self) -> tuple[list[int], list[int]]:
        n_in = self.edge_class.tail_nb.graph.n
        n_out = self.edge_class.head_nb.graph.n
        in_off, acc = [], 0
        for kind, c in self.rho.parts:
            in_off.append(acc)
            acc += structural_dim(kind, n_in) * c
        out_off, acc = [], 0
        for kind, c in self.rho_prime.parts:
            out_off.append(acc)
            acc += structural_dim(kind, n_out) * c
        return out_off, in_off

    def basis_matrices(self) -> list[np.ndarray]:
        """Materialize the full-dimension basis (one dense matrix per rank unit)."""
        d_out, d_in = self.dims
        out_off, in_off = self._offsets()
        out: list[np.ndarray] = []
        for pb in self.pair_bases:
            ro, co = out_off[pb.out_part], in_off[pb.in_part]
            n_o, n_i = pb.elements.shape[1], pb.elements.shape[2]
            for b in pb.elements:
                for oc in range(pb.c_out):
                    for ic in range(pb.c_in):
                        unit = np.zeros((pb.c_out, pb.c_in))
                        unit[oc, ic] = 1.0
                        mat = np.zeros((d_out, d_in))
                        mat[ro : ro + n_o * pb.c_out, co : co + n_i * pb.c_in] = np.kron(b, unit)
                        out.append(mat)
        return out


def solve_basis(
    ec: EdgeClass,
    rho: RepSpec,
    rho_prime: RepSpec,
    rel_tol: float = NULLSPACE_REL_TOL,
    check_generators: bool = False,
) -> KernelBasis:
    """Solve the automorphism constraint over the full enumerated group.

    With ``check_generators`` the nullspace is re-solved from the generators
    alone and the two solution spaces are asserted equal (projector match),
    guarding against generating-set bugs.
    """
    struct_cache: dict[tuple[str, str], np.ndarray] = {}
    pair_bases = []
    for j, (kind_out, c_out) in enumerate(rho_prime.parts):
        for i, (kind_in, c_in) in enumerate(rho.parts):
            kinds = (kind_out, kind_in)
            if kinds not in struct_cache:
                rows, n_out, n_in = _structural_rows(ec, kind_out, kind_in)
                flat = _nullspace(rows, n_out * n_in, rel_tol)
                struct_cache[kinds] = flat.reshape(-1, n_out, n_in)
                if check_generators:
                    gen_set = _generator_rows(ec, kind_out, kind_in)
                    gen_flat = _nullspace(gen_set, n_out * n_in, rel_tol)
                    _assert_same_span(flat, gen_flat)
            pair_bases.append(
                PairBasis(j, i, kind_out, kind_in, c_out, c_in, struct_cache[kinds])
            )
    return KernelBasis(ec, rho, rho_prime, tuple(pair_bases))


def _generator_rows(ec: EdgeClass, kind_out: str, kind_in: str) -> np.ndarray:
    rep = ec.representative
    n_in = structural_dim(kind_in, ec.tail_nb.graph.n)
    n_out = structural_dim(kind_out, ec.head_nb.graph.n)
    blocks = []
    for chi in ec.aut.generators:
        p_mat = structural_perm(kind_in, restrict_edge_iso(chi, rep, rep, "tail", ec.assignment))
        q_mat = structural_perm(kind_out, restrict_edge_iso(chi, rep, rep, "head", ec.assignment))
        blocks.append(np.kron(q_mat, np.eye(n_in)) - np.kron(np.eye(n_out), p_mat.T))
    if not blocks:
        return np.zeros((0, n_out * n_in))
    return np.vstack(blocks)


def _assert_same_span(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise ValidationError(
            f"generator-only solve disagrees with full-group solve: {b.shape[0]} vs {a.shape[0]}"
        )
    if a.shape[0] and np.max(np.abs(a.T @ a - b.T @ b)) > 1e-8:
        raise ValidationError("generator-only nullspace spans a different subspace")


@dataclass
class SharedKernel:
    """Per-class weights over the basis, with per-member realized kernels."""

    basis: KernelBasis
    weights: list[np.ndarray]  # aligned with basis.pair_bases: (r, c_in, c_out)

    def __post_init__(self):
        if len(self.weights) != len(self.basis.pair_bases):
            raise ShapeError("one weight array per basis pair expected")
        for w, pb in zip(self.weights, self.basis.pair_bases):
            if w.shape != (pb.elements.shape[0], pb.c_in, pb.c_out):
                raise ShapeError(f"weight shape {w.shape} does not match basis pair")
        self._realized: dict[tuple, np.ndarray] = {}

    @staticmethod
    def zeros(basis: KernelBasis) -> "SharedKernel":
        return SharedKernel(
            basis,
            [
                np.zeros((pb.elements.shape[0], pb.c_in, pb.c_out))
                for pb in basis.pair_bases
            ],
        )

    @staticmethod
    def random(basis: KernelBasis, rng: np.random.Generator, scale: float = 1.0) -> "SharedKernel":
        return SharedKernel(
            basis,
            [
                scale * rng.standard_normal((pb.elements.shape[0], pb.c_in, pb.c_out))
                for pb in basis.pair_bases
            ],
        )

    def representative_kernel(self) -> np.ndarray:
        d_out, d_in = self.basis.dims
        out_off, in_off = self.basis._offsets()
        k = np.zeros((d_out, d_in))
        for pb, w in zip(self.basis.pair_bases, self.weights):
            ro, co = out_off[pb.out_part], in_off[pb.in_part]
            n_o, n_i = pb.elements.shape[1], pb.elements.shape[2]
            block = np.einsum("rab,rio->aobi", pb.elements, w).reshape(
                n_o * pb.c_out, n_i * pb.c_in
            )
            k[ro : ro + n_o * pb.c_out, co : co + n_i * pb.c_in] += block
        return k

    def realize_from_transport(self, nb: EdgeNeighbourhood, transport: GraphIso) -> np.ndarray:
        """Transported kernel for a member neighbourhood.

        ``transport`` runs from the class representative onto ``nb``; the
        kernel is conjugated by the representation matrices of its endpoint
        restrictions.
        """
        cache_key = transport.mapping
        hit = self._realized.get(cache_key)
        if hit is not None:
            return hit
        ec = self.basis.edge_class
        psi_tail = restrict_edge_iso(transport, ec.representative, nb, "tail", ec.assignment)
        psi_head = restrict_edge_iso(transport, ec.representative, nb, "head", ec.assignment)
        p_mat = rep_matrix(self.basis.rho, psi_tail).entries
        q_mat = rep_matrix(self.basis.rho_prime, psi_head).entries
        realized = q_mat @ self.representative_kernel() @ p_mat.T
        self._realized[cache_key] = realized
        return realized

    def invalidate_cache(self) -> None:
        self._realized.clear()


def realize_kernel(shared: SharedKernel, member: ClassMember) -> np.ndarray:
    """Realized kernel for a registered class member."""
    ec = shared.basis.edge_class
    if member not in ec.members:
        raise NodeLookupError("member does not belong to this kernel's class")
    nb = EdgeNeighbourhood(
        member.transport.target,
        (
            member.transport.apply(ec.representative.marked[0]),
            member.transport.apply(ec.representative.marked[1]),
        ),
    )
    return shared.realize_from_transport(nb, member.transport)


CACHE_VERSION = 1


def class_cache_to_dict(kernels: list[SharedKernel]) -> dict:
    """Serializable form of solved classes, keyed by canonical encoding and
    representation text forms. Members are corpus-bound and not persisted."""
    entries = []
    for sk in kernels:
        ec = sk.basis.edge_class
        entries.append(
            {
                "key": ec.key.hex(),
                "rho": str(sk.basis.rho),
                "rho_prime": str(sk.basis.rho_prime),
                "k": ec.assignment.k,
                "nodes": list(ec.representative.graph.nodes),
                "edges": sorted(list(e) for e in ec.representative.graph.edges),
                "marked": list(ec.representative.marked),
                "generators": [
                    [list(pair) for pair in gen.mapping] for gen in ec.aut.generators
                ],
                "pair_bases": [
                    {
                        "out_part": pb.out_part,
                        "in_part": pb.in_part,
                        "kind_out": pb.kind_out,
                        "kind_in": pb.kind_in,
                        "c_out": pb.c_out,
                        "c_in": pb.c_in,
                        "elements": pb.elements.tolist(),
                        "shape": list(pb.elements.shape),
                    }
                    for pb in sk.basis.pair_bases
                ],
                "weights": [w.tolist() for w in sk.weights],
            }
        )
    return {"version": CACHE_VERSION, "entries": entries}


def class_cache_from_dict(payload: dict) -> dict[tuple[bytes, str, str], SharedKernel]:
    from .representations import parse_rep_spec

    if payload.get("version") != CACHE_VERSION:
        raise ValidationError(f"unsupported class cache version {payload.get('version')!r}")
    out: dict[tuple[bytes, str, str], SharedKernel] = {}
    for entry in payload["entries"]:
        graph = ConcreteGraph.build(entry["nodes"], [tuple(e) for e in entry["edges"]])
        rep = EdgeNeighbourhood(graph, tuple(entry["marked"]))
        gens = tuple(
            GraphIso.build(graph, graph, dict(tuple(p) for p in gen))
            for gen in entry["generators"]
        )
        ec = EdgeClass(
            key=bytes.fromhex(entry["key"]),
            representative=rep,
            assignment=NeighbourhoodAssignment(entry["k"]),
            aut=AutGenerators(graph, tuple(rep.marked), gens),
        )
        pair_bases = tuple(
            PairBasis(
                pb["out_part"],
                pb["in_part"],
                pb["kind_out"],
                pb["kind_in"],
                pb["c_out"],
                pb["c_in"],
                np.array(pb["elements"]).reshape(pb["shape"]),
            )
            for pb in entry["pair_bases"]
        )
        basis = KernelBasis(ec, parse_rep_spec(entry["rho"]), parse_rep_spec(entry["rho_prime"]), pair_bases)
        weights = [
            np.array(w, dtype=float).reshape(pb.elements.shape[0], pb.c_in, pb.c_out)
            for w, pb in zip(entry["weights"], pair_bases)
        ]
        out[(ec.key, entry["rho"], entry["rho_prime"])] = SharedKernel(basis, weights)
    return out


def eq4_residual(shared: SharedKernel) -> float:
    """Worst Frobenius residual of the constraint over basis and group."""
    ec = shared.basis.edge_class
    worst = 0.0
    mats = shared.basis.basis_matrices()
    for chi_tail, chi_head in ec.group_restrictions:
        p_mat = rep_matrix(shared.basis.rho, chi_tail).entries
        q_mat = rep_matrix(shared.basis.rho_prime, chi_head).entries
        for k in mats:
            worst = max(worst, float(np.linalg.norm(q_mat @ k - k @ p_mat)))
    return worst
