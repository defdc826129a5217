"""The weight-shared linear layer over global graph features.

Per directed edge, the message is the class kernel transported to that edge
applied to the source node's block; output blocks aggregate incoming
messages (sum by default, mean behind a flag). Because every class kernel
satisfies its automorphism constraint and transport is functorial, the layer
commutes with feature transport along any graph isomorphism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClassMissError, ShapeError, ValidationError
from .graph_core import ConcreteGraph, GraphIso
from .kernel_solver import (
    ClassMember,
    EdgeClass,
    SharedKernel,
    _class_from_neighbourhood,
    _transport_from_relab,
    class_cache_from_dict,
    class_cache_to_dict,
    locate_edge,
    solve_basis,
)
from .neighbourhoods import (
    NeighbourhoodAssignment,
    edge_neighbourhood,
    node_neighbourhood,
)
from .representations import (
    GlobalFeature,
    RepSpec,
    lift_global,
    parse_rep_spec,
    rep_dim,
    zero_feature,
)

LAYER_FORMAT_VERSION = 1


@dataclass
class NgnLayer:
    rho: RepSpec
    rho_prime: RepSpec
    assignment: NeighbourhoodAssignment
    aggregation: str = "sum"
    strict: bool = False
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.aggregation not in ("sum", "mean"):
            raise ValidationError(f"unknown aggregation {self.aggregation!r}")
        self.table: dict[bytes, SharedKernel] = {}
        self._rng = np.random.default_rng(self.seed)

    # -- class management ---------------------------------------------------

    def solve_corpus(self, corpus: list[ConcreteGraph]) -> None:
        """Pre-solve the classes of every edge in a corpus."""
        for g in corpus:
            for p, q in sorted(g.edges):
                nb = edge_neighbourhood(g, p, q, self.assignment)
                self._resolve(nb)

    def _resolve(self, nb) -> tuple[SharedKernel, GraphIso]:
        key, relab = locate_edge(nb)
        shared = self.table.get(key)
        if shared is None:
            if self.strict:
                raise ClassMissError(
                    f"edge {nb.marked} belongs to an unsolved class and strict mode is on"
                )
            ec = _class_from_neighbourhood(nb, key, relab, self.assignment)
            basis = solve_basis(ec, self.rho, self.rho_prime)
            shared = SharedKernel.random(basis, self._rng, scale=self.init_scale)
            self.table[key] = shared
        transport = _transport_from_relab(shared.basis.edge_class, nb, relab)
        return shared, transport

    def classes(self) -> list[EdgeClass]:
        return [sk.basis.edge_class for sk in self.table.values()]

    # -- forward ------------------------------------------------------------

    def forward(self, g: ConcreteGraph, v: GlobalFeature) -> GlobalFeature:
        if set(v.blocks) != set(g.nodes):
            raise ShapeError("feature blocks are not indexed by the graph's nodes")
        out = zero_feature(self.rho_prime, g, self.assignment)
        for p in g.nodes:
            want = rep_dim(self.rho, node_neighbourhood(g, p, self.assignment))
            if v.blocks[p].shape != (want,):
                raise ShapeError(f"block at node {p}: expected dim {want}, got {v.blocks[p].shape}")
        in_degree = {p: 0 for p in g.nodes}
        for p, q in sorted(g.edges, key=lambda e: (e[1], e[0])):
            nb = edge_neighbourhood(g, p, q, self.assignment)
            shared, transport = self._resolve(nb)
            kernel = shared.realize_from_transport(nb, transport)
            out.blocks[q] += kernel @ v.blocks[p]
            in_degree[q] += 1
        if self.aggregation == "mean":
            for q in g.nodes:
                if in_degree[q] > 1:
                    out.blocks[q] /= in_degree[q]
        return out

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": LAYER_FORMAT_VERSION,
            "rho": str(self.rho),
            "rho_prime": str(self.rho_prime),
            "k": self.assignment.k,
            "aggregation": self.aggregation,
            "strict": self.strict,
            "init_scale": self.init_scale,
            "seed": self.seed,
            "classes": class_cache_to_dict(list(self.table.values())),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @staticmethod
    def from_dict(payload: dict) -> "NgnLayer":
        if payload.get("version") != LAYER_FORMAT_VERSION:
            raise ValidationError(f"unsupported layer format version {payload.get('version')!r}")
        layer = NgnLayer(
            rho=parse_rep_spec(payload["rho"]),
            rho_prime=parse_rep_spec(payload["rho_prime"]),
            assignment=NeighbourhoodAssignment(payload["k"]),
            aggregation=payload["aggregation"],
            strict=payload["strict"],
            init_scale=payload["init_scale"],
            seed=payload["seed"],
        )
        for (key, _, _), shared in class_cache_from_dict(payload["classes"]).items():
            layer.table[key] = shared
        return layer

    @staticmethod
    def load(path: str | Path) -> "NgnLayer":
        return NgnLayer.from_dict(json.loads(Path(path).read_text()))


def check_naturality(
    layer: NgnLayer, g: ConcreteGraph, phi: GraphIso, v: GlobalFeature
) -> float:
    """Max-norm residual of the commutation law along one isomorphism."""
    a = layer.assignment
    transported_out = lift_global(phi, layer.forward(g, v), layer.rho_prime, a)
    out_of_transported = layer.forward(phi.target, lift_global(phi, v, layer.rho, a))
    return transported_out.max_abs_diff(out_of_transported)
