"""Classifier assembly, training loop, and experiment model builders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .batched import (
    EdgePlan,
    GcnPlan,
    build_plain_gcn,
    compile_gcn_plan,
    compile_plan,
    gcn2_layer_numpy,
    gcn2_layer_tensor,
    gcn_forward_numpy,
    init_message_net_params,
    message_net_from_params,
)
from .errors import GenerationError
from .message_net import GcnMessageNet
from .neighbourhoods import NeighbourhoodAssignment


@dataclass
class Gcn2Config:
    ngn_layers: int = 3
    msg_layers: int = 2
    hidden: int = 16
    classes: int = 2
    k: int = 1
    aggregation: str = "sum"
    dtype: type = np.float64


def init_classifier_params(
    rng: np.random.Generator, c_in: int, cfg: Gcn2Config
) -> dict[str, ad.Tensor]:
    params: dict[str, ad.Tensor] = {}
    width_in = c_in
    for layer in range(cfg.ngn_layers):
        params.update(
            init_message_net_params(
                rng,
                cfg.msg_layers,
                cfg.hidden,
                data_in=width_in,
                c_out=cfg.hidden,
                dtype=cfg.dtype,
                prefix=f"ngn{layer}",
            )
        )
        width_in = cfg.hidden
    bound = np.sqrt(6.0 / (cfg.hidden + cfg.classes))
    params["head/w"] = ad.param(rng.uniform(-bound, bound, (cfg.hidden, cfg.classes)), dtype=cfg.dtype)
    params["head/b"] = ad.param(np.zeros(cfg.classes), dtype=cfg.dtype)
    return params


def classifier_logits(
    plan: EdgePlan, params: dict[str, ad.Tensor], x0: np.ndarray, cfg: Gcn2Config
) -> ad.Tensor:
    x = ad.constant(x0.astype(cfg.dtype))
    for layer in range(cfg.ngn_layers):
        x = gcn2_layer_tensor(plan, params, x, prefix=f"ngn{layer}", aggregation=cfg.aggregation)
        if layer < cfg.ngn_layers - 1:
            x = ad.relu(x)
    node_feats = ad.segment_mean(x, plan.node_seg, plan.n_nodes_total)
    graph_feats = ad.segment_mean(node_feats, plan.graph_of_node, len(plan.graphs))
    return ad.add(ad.matmul(graph_feats, params["head/w"]), params["head/b"])


def classifier_logits_numpy(
    plan: EdgePlan, params: dict[str, ad.Tensor], x0: np.ndarray, cfg: Gcn2Config
) -> np.ndarray:
    x = x0.astype(cfg.dtype)
    for layer in range(cfg.ngn_layers):
        net = message_net_from_params(params, prefix=f"ngn{layer}")
        x = gcn2_layer_numpy(plan, net, x, aggregation=cfg.aggregation)
        if layer < cfg.ngn_layers - 1:
            x = np.maximum(x, 0.0)
    node_feats = _segment_mean_np(x, plan.node_seg, plan.n_nodes_total)
    graph_feats = _segment_mean_np(node_feats, plan.graph_of_node, len(plan.graphs))
    return graph_feats @ params["head/w"].data + params["head/b"].data


def _segment_mean_np(x: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    counts = np.maximum(np.bincount(seg, minlength=n), 1).astype(x.dtype)
    sums = np.zeros((n, x.shape[1]), dtype=x.dtype)
    np.add.at(sums, seg, x)
    return sums / counts[:, None]


@dataclass
class TrainResult:
    losses: list[float]
    train_accuracy: float
    epochs_run: int
    diverged: bool = False


def train_classifier(
    plans: list[EdgePlan],
    inputs: list[np.ndarray],
    labels: list[np.ndarray],
    params: dict[str, ad.Tensor],
    cfg: Gcn2Config,
    epochs: int,
    rate: float,
    seed: int,
    decay: float = 0.97,
) -> TrainResult:
    """Adam over pre-batched plans; batch order reshuffles per epoch.

    The step size decays by ``decay`` per epoch, which keeps late-training
    minibatch steps from kicking the model out of its minimum.
    """
    rng = np.random.default_rng(seed)
    state = ad.AdamState(rate=rate)
    losses: list[float] = []
    for epoch in range(epochs):
        state.rate = rate * (decay**epoch)
        order = rng.permutation(len(plans))
        epoch_loss = 0.0
        for b in order:
            logits = classifier_logits(plans[b], params, inputs[b], cfg)
            loss = ad.softmax_cross_entropy(logits, labels[b])
            if not np.isfinite(loss.data):
                return TrainResult(losses, 0.0, epoch, diverged=True)
            grads = ad.grads_of(loss, params)
            ad.adam_step(state, params, grads)
            epoch_loss += float(loss.data) * len(labels[b])
        losses.append(epoch_loss / sum(len(l) for l in labels))
    correct = 0
    total = 0
    for plan, x0, y in zip(plans, inputs, labels):
        pred = classifier_logits_numpy(plan, params, x0, cfg).argmax(axis=1)
        correct += int((pred == y).sum())
        total += len(y)
    return TrainResult(losses, correct / max(total, 1), epochs)


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


# ---------------------------------------------------------------------------
# Random-weight embedding models for the expressiveness experiment
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingConfig:
    ngn_layers: int = 2    # stacked NGN layers for the GCN² model
    layers: int = 2        # message-net depth (and baseline depth per block)
    hidden: int = 32
    out: int = 32
    dtype: type = np.float32
    chunk_edges: int | None = 20000


def gcn2_embeddings(
    plan: EdgePlan, attrs: list[np.ndarray], seed: int, cfg: EmbeddingConfig
) -> np.ndarray:
    """Graph embeddings from a random-weight stacked GCN², mean-pooled.

    One NGN layer alone separates structurally close graphs (strongly
    regular pairs) only marginally relative to the dissimilarity threshold;
    stacking amplifies the structural signal.
    """
    rng = np.random.default_rng(seed)
    from .batched import node_attrs_to_buffer

    x = node_attrs_to_buffer(plan, attrs, dtype=cfg.dtype)
    width = attrs[0].shape[1]
    for layer in range(cfg.ngn_layers):
        c_out = cfg.out if layer == cfg.ngn_layers - 1 else cfg.hidden
        params = init_message_net_params(
            rng, cfg.layers, cfg.hidden, data_in=width, c_out=c_out, dtype=cfg.dtype, prefix=f"m{layer}"
        )
        net = message_net_from_params(params, prefix=f"m{layer}")
        x = gcn2_layer_numpy(plan, net, x, chunk_edges=cfg.chunk_edges)
        if layer < cfg.ngn_layers - 1:
            x = np.maximum(x, 0.0)
        width = c_out
    node_feats = _segment_mean_np(x, plan.node_seg, plan.n_nodes_total)
    return _segment_mean_np(node_feats, plan.graph_of_node, len(plan.graphs))


def gcn_embeddings(
    plan: GcnPlan, attrs: list[np.ndarray], seed: int, cfg: EmbeddingConfig
) -> np.ndarray:
    """Baseline invariant-message-passing embeddings at matching total depth."""
    rng = np.random.default_rng(seed)
    depth = cfg.ngn_layers * cfg.layers
    net = build_plain_gcn(
        rng, depth, cfg.hidden, c_in=attrs[0].shape[1], c_out=cfg.out, dtype=cfg.dtype
    )
    x0 = np.vstack([d.astype(cfg.dtype) for d in attrs])
    x = gcn_forward_numpy(plan, net, x0)
    return _segment_mean_np(x, plan.graph_of_node, len(plan.graphs))


def dissimilar_pair_rate(embeddings: np.ndarray, eps: float = 1e-3) -> float:
    """Fraction of graph pairs whose embeddings differ by more than eps
    times the mean embedding norm."""
    n = embeddings.shape[0]
    if n < 2:
        raise GenerationError("need at least two graphs to compare")
    norms = np.linalg.norm(embeddings.astype(np.float64), axis=1)
    threshold = eps * norms.mean()
    diffs = embeddings.astype(np.float64)[:, None, :] - embeddings.astype(np.float64)[None, :, :]
    dist = np.linalg.norm(diffs, axis=2)
    iu = np.triu_indices(n, k=1)
    return float((dist[iu] > threshold).mean())
