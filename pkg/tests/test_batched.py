import numpy as np
import pytest

from ngn import autodiff as ad
from ngn.batched import (
    buffer_to_features,
    compile_gcn_plan,
    compile_plan,
    features_to_buffer,
    gcn2_layer_numpy,
    gcn2_layer_tensor,
    gcn_forward_numpy,
    build_plain_gcn,
    init_message_net_params,
    message_net_from_params,
    node_attrs_to_buffer,
)
from ngn.message_net import ngn_gcn2_forward
from ngn.models import (
    EmbeddingConfig,
    Gcn2Config,
    classifier_logits,
    classifier_logits_numpy,
    dissimilar_pair_rate,
    gcn2_embeddings,
    init_classifier_params,
    train_classifier,
)
from ngn.neighbourhoods import NeighbourhoodAssignment, node_neighbourhood
from ngn.representations import GlobalFeature

from helpers import cycle_graph, finite_difference_grads, random_graph

K1 = NeighbourhoodAssignment(1)


def standard_blocks(rng, g, c):
    return GlobalFeature(
        {
            p: rng.standard_normal((node_neighbourhood(g, p, K1).graph.n, c)).reshape(-1)
            for p in g.nodes
        }
    )


class TestPlanLayout:
    def test_buffer_round_trip(self):
        rng = np.random.default_rng(0)
        graphs = [random_graph(rng, 6, 0.5), cycle_graph(0, 1, 2)]
        plan = compile_plan(graphs, K1)
        feats = [standard_blocks(rng, g, 3) for g in graphs]
        buf = features_to_buffer(plan, feats, 3)
        back = buffer_to_features(plan, buf)
        for orig, round_tripped in zip(feats, back):
            assert orig.max_abs_diff(round_tripped) == 0.0

    def test_node_attr_gathering(self):
        g = cycle_graph(0, 1, 2)
        plan = compile_plan([g], K1)
        attrs = [np.array([[10.0], [20.0], [30.0]])]
        buf = node_attrs_to_buffer(plan, attrs)
        # every ball is the whole triangle, so every block lists all three
        assert buf.shape == (9, 1)
        assert np.array_equal(buf[:3, 0], [10.0, 20.0, 30.0])


class TestBatchedMatchesReference:
    def test_matches_per_edge_reference(self):
        rng = np.random.default_rng(1)
        graphs = [random_graph(rng, int(rng.integers(4, 10)), 0.4, id_offset=3) for _ in range(4)]
        plan = compile_plan(graphs, K1)
        params = init_message_net_params(rng, 2, 6, data_in=2, c_out=3)
        net = message_net_from_params(params)

        feats = [standard_blocks(rng, g, 2) for g in graphs]
        buf = features_to_buffer(plan, feats, 2)

        out_np = gcn2_layer_numpy(plan, net, buf)
        out_tensor = gcn2_layer_tensor(plan, params, ad.constant(buf))
        assert np.allclose(out_np, out_tensor.data, atol=1e-12)

        back = buffer_to_features(plan, out_np)
        for g, v, got in zip(graphs, feats, back):
            ref = ngn_gcn2_forward(net, g, v, K1)
            assert got.max_abs_diff(ref) < 1e-12

    def test_chunked_matches_unchunked(self):
        rng = np.random.default_rng(2)
        graphs = [random_graph(rng, 8, 0.4) for _ in range(3)]
        plan = compile_plan(graphs, K1)
        params = init_message_net_params(rng, 2, 5, data_in=1, c_out=2)
        net = message_net_from_params(params)
        feats = [standard_blocks(rng, g, 1) for g in graphs]
        buf = features_to_buffer(plan, feats, 1)
        full = gcn2_layer_numpy(plan, net, buf)
        chunked = gcn2_layer_numpy(plan, net, buf, chunk_edges=3)
        assert np.array_equal(full, chunked)

    def test_tensor_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        graphs = [random_graph(rng, 6, 0.5) for _ in range(2)]
        plan = compile_plan(graphs, K1)
        params = init_message_net_params(rng, 2, 4, data_in=1, c_out=2)
        feats = [standard_blocks(rng, g, 1) for g in graphs]
        buf = features_to_buffer(plan, feats, 1)
        labels = np.array([0, 1])

        def loss_tensor():
            x = gcn2_layer_tensor(plan, params, ad.constant(buf))
            pooled = ad.segment_mean(x, plan.node_seg, plan.n_nodes_total)
            graph_feats = ad.segment_mean(pooled, plan.graph_of_node, len(graphs))
            return ad.softmax_cross_entropy(graph_feats, labels)

        analytic = ad.grads_of(loss_tensor(), params)
        numeric = finite_difference_grads(lambda: loss_tensor().data, params)
        for name in params:
            scale = max(1e-8, float(np.max(np.abs(numeric[name]))))
            assert np.max(np.abs(analytic[name] - numeric[name])) / scale < 1e-5


class TestClassifier:
    def test_tensor_and_numpy_paths_agree(self):
        rng = np.random.default_rng(4)
        graphs = [random_graph(rng, 7, 0.4) for _ in range(5)]
        plan = compile_plan(graphs, K1)
        cfg = Gcn2Config(ngn_layers=2, msg_layers=2, hidden=5, classes=3)
        params = init_classifier_params(rng, 2, cfg)
        x0 = node_attrs_to_buffer(plan, [rng.standard_normal((g.n, 2)) for g in graphs])
        logits_t = classifier_logits(plan, params, x0, cfg)
        logits_n = classifier_logits_numpy(plan, params, x0, cfg)
        assert np.allclose(logits_t.data, logits_n, atol=1e-12)

    def test_training_reduces_loss_and_is_deterministic(self):
        rng = np.random.default_rng(5)
        graphs, labels = [], []
        # two planted families: dense blobs vs sparse rings
        for i in range(12):
            if i % 2 == 0:
                graphs.append(random_graph(rng, 8, 0.8, id_offset=0))
                labels.append(0)
            else:
                graphs.append(cycle_graph(*range(8)))
                labels.append(1)
        plan = compile_plan(graphs, K1)
        degattr = [np.array([[len(g.und_nbrs[u])] for u in g.nodes], dtype=float) for g in graphs]
        x0 = node_attrs_to_buffer(plan, degattr)
        cfg = Gcn2Config(ngn_layers=2, msg_layers=2, hidden=8, classes=2)

        def run():
            params = init_classifier_params(np.random.default_rng(7), 1, cfg)
            return train_classifier(
                [plan], [x0], [np.array(labels)], params, cfg, epochs=30, rate=3e-3, seed=0
            )

        r1, r2 = run(), run()
        assert r1.losses == r2.losses
        assert r1.losses[-1] < r1.losses[0]
        assert r1.train_accuracy == 1.0


class TestEmbeddings:
    def test_isomorphic_graphs_embed_identically(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 10, 0.4)
        relabs = []
        for _ in range(6):
            perm = dict(zip(g.nodes, [int(x) for x in rng.permutation(list(g.nodes))]))
            relabs.append(g.relabel(perm))
        plan = compile_plan(relabs, K1)
        degrees = [np.array([[len(h.und_nbrs[u])] for u in h.nodes], dtype=float) for h in relabs]
        emb = gcn2_embeddings(plan, degrees, seed=0, cfg=EmbeddingConfig(hidden=16, out=8))
        rate = dissimilar_pair_rate(emb)
        assert rate == 0.0

    def test_distinct_random_graphs_embed_differently(self):
        rng = np.random.default_rng(7)
        graphs = [random_graph(rng, 10, 0.4, id_offset=0) for _ in range(6)]
        plan = compile_plan(graphs, K1)
        degrees = [np.array([[len(h.und_nbrs[u])] for u in h.nodes], dtype=float) for h in graphs]
        emb = gcn2_embeddings(plan, degrees, seed=1, cfg=EmbeddingConfig(hidden=16, out=8))
        assert dissimilar_pair_rate(emb) == 1.0

    def test_gcn_baseline_blind_to_regular_graphs(self):
        # two non-isomorphic 3-regular graphs: the triangular prism and K_{3,3};
        # with constant degree inputs an invariant message passer cannot tell
        # them apart, so the pair must land below the dissimilarity threshold
        from ngn.graph_core import from_undirected
        from ngn.models import gcn_embeddings

        k33 = from_undirected(range(6), [(i, j + 3) for i in range(3) for j in range(3)])
        prism = from_undirected(
            range(6), [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)]
        )
        plan = compile_gcn_plan([prism, k33])
        degrees = [np.full((6, 1), 3.0), np.full((6, 1), 3.0)]
        emb = gcn_embeddings(plan, degrees, seed=2, cfg=EmbeddingConfig(hidden=16, out=8))
        assert dissimilar_pair_rate(emb) == 0.0
