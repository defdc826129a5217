"""Benchmark corpus ingestion, synthetic suites, and initial node features.

Supports the plain-text benchmark distribution format (one global edge list
plus per-node graph indicators and labels) and the compact ASCII graph6
format for undirected graphs up to 62 nodes. Loaded graphs are symmetrized
directed edge sets; per-graph node ids are remapped to 0..n-1 with the
original ids kept alongside.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, GenerationError, ParseError
from .graph_core import ConcreteGraph, canonical_form, from_undirected

DATASET_CACHE_VERSION = 1


@dataclass
class GraphDataset:
    name: str
    graphs: list[ConcreteGraph]
    labels: np.ndarray  # class indices 0..n_classes-1
    n_classes: int
    node_labels: list[list[int]] | None = None  # per graph, per local node id
    original_ids: list[list[int]] | None = None

    def __post_init__(self):
        if len(self.labels) != len(self.graphs):
            raise ContractError("one label per graph required")
        if self.node_labels is not None:
            for g, labs in zip(self.graphs, self.node_labels):
                if len(labs) != g.n:
                    raise ContractError("node labels must cover every node")

    @property
    def mean_nodes(self) -> float:
        return float(np.mean([g.n for g in self.graphs])) if self.graphs else 0.0


# ---------------------------------------------------------------------------
# TU-style text format
# ---------------------------------------------------------------------------


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise ParseError(f"missing file {path.name}")
    return path.read_text().splitlines()


def load_tu(directory: str | Path) -> GraphDataset:
    """Load a dataset directory of the standard four/five text files.

    Expects ``<DS>_A.txt`` (comma-separated 1-indexed global node id pairs),
    ``<DS>_graph_indicator.txt``, ``<DS>_graph_labels.txt`` and optionally
    ``<DS>_node_labels.txt``.
    """
    directory = Path(directory)
    a_files = sorted(directory.glob("*_A.txt"))
    if not a_files:
        raise ParseError(f"no *_A.txt file in {directory}")
    name = a_files[0].name[: -len("_A.txt")]

    indicator: list[int] = []
    for ln, line in enumerate(_read_lines(directory / f"{name}_graph_indicator.txt"), 1):
        line = line.strip()
        if not line:
            continue
        try:
            indicator.append(int(line))
        except ValueError:
            raise ParseError(f"bad graph indicator {line!r}", ln) from None
    n_graphs = max(indicator, default=0)

    raw_labels: list[int] = []
    for ln, line in enumerate(_read_lines(directory / f"{name}_graph_labels.txt"), 1):
        line = line.strip()
        if not line:
            continue
        try:
            raw_labels.append(int(line))
        except ValueError:
            raise ParseError(f"bad graph label {line!r}", ln) from None
    if len(raw_labels) != n_graphs:
        raise ParseError(
            f"{len(raw_labels)} graph labels for {n_graphs} graphs", len(raw_labels)
        )

    # global node id -> (graph index, local id); locals remapped to 0..n-1
    node_of: dict[int, tuple[int, int]] = {}
    counts = [0] * n_graphs
    originals: list[list[int]] = [[] for _ in range(n_graphs)]
    for global_id, graph_id in enumerate(indicator, 1):
        gi = graph_id - 1
        if not (0 <= gi < n_graphs):
            raise ParseError(f"graph indicator {graph_id} out of range", global_id)
        node_of[global_id] = (gi, counts[gi])
        originals[gi].append(global_id)
        counts[gi] += 1

    edges: list[list[tuple[int, int]]] = [[] for _ in range(n_graphs)]
    for ln, line in enumerate(_read_lines(directory / f"{name}_A.txt"), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 'i, j', got {line!r}", ln)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer edge endpoint in {line!r}", ln) from None
        if u not in node_of or v not in node_of:
            raise ParseError(f"edge ({u}, {v}) references unknown node", ln)
        (gu, lu), (gv, lv) = node_of[u], node_of[v]
        if gu != gv:
            raise ParseError(f"edge ({u}, {v}) crosses graphs", ln)
        edges[gu].append((lu, lv))

    node_labels: list[list[int]] | None = None
    labels_path = directory / f"{name}_node_labels.txt"
    if labels_path.exists():
        node_labels = [[0] * c for c in counts]
        flat: list[int] = []
        for ln, line in enumerate(_read_lines(labels_path), 1):
            line = line.strip()
            if not line:
                continue
            try:
                flat.append(int(line))
            except ValueError:
                raise ParseError(f"bad node label {line!r}", ln) from None
        if len(flat) != len(indicator):
            raise ParseError(f"{len(flat)} node labels for {len(indicator)} nodes", len(flat))
        for global_id, lab in enumerate(flat, 1):
            gi, li = node_of[global_id]
            node_labels[gi][li] = lab

    graphs = []
    for gi in range(n_graphs):
        sym = set(edges[gi]) | {(v, u) for (u, v) in edges[gi]}
        graphs.append(ConcreteGraph.build(range(counts[gi]), sym))

    classes = sorted(set(raw_labels))
    class_index = {c: i for i, c in enumerate(classes)}
    return GraphDataset(
        name=name,
        graphs=graphs,
        labels=np.array([class_index[c] for c in raw_labels], dtype=np.intp),
        n_classes=len(classes),
        node_labels=node_labels,
        original_ids=originals,
    )


def write_tu(ds: GraphDataset, directory: str | Path) -> None:
    """Write a dataset in the same text format ``load_tu`` reads."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    a_lines, ind_lines, node_lab_lines = [], [], []
    offset = 0
    for gi, g in enumerate(ds.graphs):
        order = {u: i for i, u in enumerate(g.nodes)}
        for u, v in sorted(g.edges):
            a_lines.append(f"{offset + order[u] + 1}, {offset + order[v] + 1}")
        ind_lines.extend([str(gi + 1)] * g.n)
        if ds.node_labels is not None:
            node_lab_lines.extend(str(l) for l in ds.node_labels[gi])
        offset += g.n
    (directory / f"{ds.name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (directory / f"{ds.name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (directory / f"{ds.name}_graph_labels.txt").write_text(
        "\n".join(str(int(l)) for l in ds.labels) + "\n"
    )
    if ds.node_labels is not None:
        (directory / f"{ds.name}_node_labels.txt").write_text("\n".join(node_lab_lines) + "\n")


# ---------------------------------------------------------------------------
# graph6
# ---------------------------------------------------------------------------


def _graph6_parse_line(line: str, ln: int) -> ConcreteGraph:
    if line.startswith(">>graph6<<"):
        line = line[len(">>graph6<<") :]
    if not line:
        raise ParseError("empty graph6 line", ln)
    n = ord(line[0]) - 63
    if not (0 <= n <= 62):
        raise ParseError(f"unsupported graph6 order byte {line[0]!r} (long form?)", ln)
    need_bits = n * (n - 1) // 2
    need_chars = (need_bits + 5) // 6
    data = line[1 : 1 + need_chars]
    if len(data) < need_chars:
        raise ParseError(f"truncated graph6 record: {len(data)} of {need_chars} chars", ln)
    bits = []
    for ch in data:
        val = ord(ch) - 63
        if not (0 <= val < 64):
            raise ParseError(f"invalid graph6 character {ch!r}", ln)
        bits.extend((val >> shift) & 1 for shift in range(5, -1, -1))
    pairs = []
    at = 0
    for j in range(1, n):
        for i in range(j):
            if bits[at]:
                pairs.append((i, j))
            at += 1
    return from_undirected(range(n), pairs)


def load_graph6(path: str | Path) -> list[ConcreteGraph]:
    """Parse an ASCII graph6 file (short form, n <= 62) into symmetrized graphs."""
    out = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if line:
            out.append(_graph6_parse_line(line, ln))
    return out


def write_graph6(graphs: list[ConcreteGraph], path: str | Path) -> None:
    lines = []
    for g in graphs:
        n = g.n
        if n > 62:
            raise ContractError("graph6 short form supports at most 62 nodes")
        order = {u: i for i, u in enumerate(g.nodes)}
        bits = []
        for j in range(1, n):
            for i in range(j):
                u, v = g.nodes[i], g.nodes[j]
                bits.append(1 if (u, v) in g.edges or (v, u) in g.edges else 0)
        while len(bits) % 6:
            bits.append(0)
        chars = [chr(n + 63)]
        for at in range(0, len(bits), 6):
            val = 0
            for b in bits[at : at + 6]:
                val = (val << 1) | b
            chars.append(chr(val + 63))
        lines.append("".join(chars))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Initial features
# ---------------------------------------------------------------------------


def initial_features(ds: GraphDataset, mode: str) -> list[np.ndarray]:
    """Per-node feature rows: one-hot node labels, or the vertex degree."""
    if mode == "degree":
        return [
            np.array([[float(len(g.und_nbrs[u]))] for u in g.nodes]) for g in ds.graphs
        ]
    if mode == "onehot-label":
        if ds.node_labels is None:
            raise ContractError("dataset has no node labels; one-hot features unavailable")
        alphabet = sorted({l for labs in ds.node_labels for l in labs})
        index = {l: i for i, l in enumerate(alphabet)}
        out = []
        for g, labs in zip(ds.graphs, ds.node_labels):
            rows = np.zeros((g.n, len(alphabet)))
            for i in range(g.n):
                rows[i, index[labs[i]]] = 1.0
            out.append(rows)
        return out
    raise ContractError(f"unknown feature mode {mode!r}")


# ---------------------------------------------------------------------------
# Synthetic suites
# ---------------------------------------------------------------------------

SUITE_NODES = 25
SUITE_DEGREE = 6
SUITE_SIZE = 100


def _gnp(rng: np.random.Generator, n: int, p: float) -> ConcreteGraph:
    pairs = [
        (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p
    ]
    return from_undirected(range(n), pairs)


def _is_regular(g: ConcreteGraph) -> bool:
    degs = {len(g.und_nbrs[v]) for v in g.nodes}
    return len(degs) == 1


def _random_regular(rng: np.random.Generator, n: int, d: int, swaps: int) -> ConcreteGraph:
    """Edge-swap walk from a circulant start; preserves d-regularity."""
    edges = {frozenset((i, (i + s) % n)) for i in range(n) for s in range(1, d // 2 + 1)}
    edge_list = [tuple(sorted(e)) for e in sorted(edges, key=sorted)]
    edge_set = set(map(frozenset, edge_list))
    done = 0
    attempts = 0
    while done < swaps:
        attempts += 1
        if attempts > 100 * swaps:
            raise GenerationError("edge-swap walk failed to mix")
        i, j = rng.integers(len(edge_list)), rng.integers(len(edge_list))
        if i == j:
            continue
        (a, b), (c, d2) = edge_list[i], edge_list[j]
        if rng.random() < 0.5:
            c, d2 = d2, c
        # rewire (a,b),(c,d2) -> (a,c),(b,d2)
        if len({a, b, c, d2}) < 4:
            continue
        new1, new2 = frozenset((a, c)), frozenset((b, d2))
        if new1 in edge_set or new2 in edge_set:
            continue
        edge_set.discard(frozenset((a, b)))
        edge_set.discard(frozenset((c, d2)))
        edge_set.add(new1)
        edge_set.add(new2)
        edge_list[i] = tuple(sorted((a, c)))
        edge_list[j] = tuple(sorted((b, d2)))
        done += 1
    return from_undirected(range(n), edge_list)


def synth_suites(
    seed: int, srg_graphs: list[ConcreteGraph] | None = None, retry_cap: int = 2000
) -> dict[str, list[ConcreteGraph]]:
    """The four expressiveness suites.

    random: non-isomorphic non-regular G(25, p) with mean degree 6;
    regular: non-isomorphic 6-regular graphs on 25 nodes;
    strongly_regular: caller-provided graphs, or the built-in constructions;
    isomorphic: 100 relabelings of one random graph.
    """
    rng = np.random.default_rng(seed)
    p = SUITE_DEGREE / (SUITE_NODES - 1)

    random_suite: list[ConcreteGraph] = []
    seen: set[bytes] = set()
    tries = 0
    while len(random_suite) < SUITE_SIZE:
        tries += 1
        if tries > retry_cap:
            raise GenerationError("could not generate enough distinct non-regular graphs")
        g = _gnp(rng, SUITE_NODES, p)
        if _is_regular(g):
            continue
        key = canonical_form(g).encoding
        if key in seen:
            continue
        seen.add(key)
        random_suite.append(g)

    regular_suite: list[ConcreteGraph] = []
    seen = set()
    tries = 0
    while len(regular_suite) < SUITE_SIZE:
        tries += 1
        if tries > retry_cap:
            raise GenerationError("could not generate enough distinct regular graphs")
        g = _random_regular(rng, SUITE_NODES, SUITE_DEGREE, swaps=150)
        key = canonical_form(g).encoding
        if key in seen:
            continue
        seen.add(key)
        regular_suite.append(g)

    if srg_graphs is None:
        from .srg import builtin_srg_25

        srg_graphs = builtin_srg_25()

    base = _gnp(rng, SUITE_NODES, p)
    iso_suite = []
    for _ in range(SUITE_SIZE):
        perm = dict(zip(base.nodes, (int(x) for x in rng.permutation(SUITE_NODES))))
        iso_suite.append(base.relabel(perm))

    return {
        "random": random_suite,
        "regular": regular_suite,
        "strongly_regular": list(srg_graphs),
        "isomorphic": iso_suite,
    }


# ---------------------------------------------------------------------------
# Cross-validation folds
# ---------------------------------------------------------------------------


def ten_fold_split(ds: GraphDataset, seed: int) -> list[np.ndarray]:
    """Ten folds, stratified by label, deterministic per seed."""
    if len(ds.graphs) < 10:
        raise ContractError("ten-fold split needs at least 10 graphs")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(10)]
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        if len(members) < 10:
            warnings.warn(
                f"class {c} has only {len(members)} graphs; stratification degenerates"
            )
        members = members[rng.permutation(len(members))]
        for i, gi in enumerate(members):
            folds[i % 10].append(int(gi))
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


# ---------------------------------------------------------------------------
# Internal cache
# ---------------------------------------------------------------------------


def save_dataset(ds: GraphDataset, path: str | Path) -> None:
    payload = {
        "version": DATASET_CACHE_VERSION,
        "name": ds.name,
        "n_classes": ds.n_classes,
        "labels": [int(l) for l in ds.labels],
        "graphs": [
            {"nodes": list(g.nodes), "edges": sorted(list(e) for e in g.edges)}
            for g in ds.graphs
        ],
        "node_labels": ds.node_labels,
        "original_ids": ds.original_ids,
    }
    Path(path).write_text(json.dumps(payload))


def load_dataset(path: str | Path) -> GraphDataset:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != DATASET_CACHE_VERSION:
        raise ParseError(f"unsupported dataset cache version {payload.get('version')!r}")
    graphs = [
        ConcreteGraph.build(g["nodes"], [tuple(e) for e in g["edges"]])
        for g in payload["graphs"]
    ]
    return GraphDataset(
        name=payload["name"],
        graphs=graphs,
        labels=np.array(payload["labels"], dtype=np.intp),
        n_classes=payload["n_classes"],
        node_labels=payload["node_labels"],
        original_ids=payload["original_ids"],
    )
