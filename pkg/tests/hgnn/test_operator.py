import unittest

import numpy as np

from personify.model import EdgeFamily, Hyperedge, Hypergraph
from personify.hgnn.operator import degrees, propagation_operator


def make_graph(num_nodes, member_lists, node_weights=None,
               edge_weights=None):
    edges = tuple(Hyperedge(i, EdgeFamily.FOR, members)
                  for i, members in enumerate(member_lists))
    if node_weights is None:
        node_weights = np.ones(num_nodes)
    if edge_weights is None:
        edge_weights = np.ones(len(edges))
    return Hypergraph(num_nodes, edges, node_weights, edge_weights)


def random_graph(rng, unit_nodes=False):
    num_nodes = int(rng.integers(2, 15))
    member_lists = set()
    for _ in range(int(rng.integers(1, 10))):
        size = int(rng.integers(1, num_nodes + 1))
        member_lists.add(tuple(sorted(rng.choice(num_nodes, size,
                                                 replace=False))))
    member_lists = sorted(member_lists)
    node_weights = np.ones(num_nodes) if unit_nodes \
        else rng.uniform(0.1, 3.0, num_nodes)
    return make_graph(num_nodes, member_lists, node_weights,
                      rng.uniform(0.1, 3.0, len(member_lists)))


def dense_operator(graph):
    h = graph.incidence().toarray()
    u = np.diag(graph.node_weights)
    w = np.diag(graph.edge_weights)
    d_v = h @ graph.edge_weights
    d_e = h.T @ graph.node_weights
    dv_inv_sqrt = np.diag([1 / np.sqrt(d) if d > 0 else 0.0 for d in d_v])
    return dv_inv_sqrt @ u @ h @ w @ np.diag(1 / d_e) @ h.T @ u @ dv_inv_sqrt


class DegreesTest(unittest.TestCase):
    def test_small_example(self):
        data = degrees(make_graph(3, [(0, 1), (1, 2)]))
        np.testing.assert_array_equal(data.d_e, [2, 2])
        np.testing.assert_array_equal(data.d_v, [1, 2, 1])

    def test_weighted(self):
        graph = make_graph(3, [(0, 1), (1, 2)], np.array([1.0, 2.0, 3.0]),
                           np.array([0.5, 4.0]))
        data = degrees(graph)
        np.testing.assert_allclose(data.d_v, [0.5, 4.5, 4.0])
        np.testing.assert_allclose(data.d_e, [3.0, 5.0])

    def test_linear_in_weights(self):
        base = degrees(make_graph(3, [(0, 1), (1, 2)]))
        doubled = degrees(make_graph(3, [(0, 1), (1, 2)], 2 * np.ones(3)))
        np.testing.assert_allclose(doubled.d_e, 2 * base.d_e)
        np.testing.assert_allclose(doubled.d_v, base.d_v)
        tripled = degrees(make_graph(3, [(0, 1), (1, 2)],
                                     edge_weights=3 * np.ones(2)))
        np.testing.assert_allclose(tripled.d_v, 3 * base.d_v)
        np.testing.assert_allclose(tripled.d_e, base.d_e)


class PropagationOperatorTest(unittest.TestCase):
    def test_single_edge(self):
        op = propagation_operator(make_graph(2, [(0, 1)]))
        np.testing.assert_allclose(op.matrix().toarray(),
                                   [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(op.apply(np.array([2.0, 0.0])),
                                   [1.0, 1.0])

    def test_isolated_node(self):
        op = propagation_operator(make_graph(3, [(0, 1)]))
        dense = op.matrix().toarray()
        np.testing.assert_array_equal(dense[2], np.zeros(3))
        np.testing.assert_array_equal(dense[:, 2], np.zeros(3))
        result = op.apply(np.ones((3, 4)))
        np.testing.assert_array_equal(result[2], np.zeros(4))

    def test_no_edges(self):
        op = propagation_operator(make_graph(3, []))
        np.testing.assert_array_equal(op.apply(np.ones((3, 2))),
                                      np.zeros((3, 2)))

    def test_matches_dense(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            graph = random_graph(rng)
            expected = dense_operator(graph)
            op = propagation_operator(graph)
            np.testing.assert_allclose(op.matrix().toarray(), expected,
                                       atol=1e-12)
            x = rng.normal(size=(graph.num_nodes, 3))
            np.testing.assert_allclose(op.apply(x), expected @ x,
                                       atol=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            dense = propagation_operator(random_graph(rng)).matrix().toarray()
            np.testing.assert_allclose(dense, dense.T, atol=1e-12)

    def test_spectrum(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            graph = random_graph(rng, unit_nodes=True)
            op = propagation_operator(graph)
            eigenvalues = np.linalg.eigvalsh(op.laplacian().toarray())
            self.assertGreaterEqual(eigenvalues.min(), -1e-10)

            # sqrt(d_v) is a fixed point of the operator
            root = np.sqrt(op.degrees.d_v)
            np.testing.assert_allclose(op.apply(root), root, atol=1e-10)

    def test_wrong_rows(self):
        op = propagation_operator(make_graph(2, [(0, 1)]))
        with self.assertRaises(ValueError):
            op.apply(np.ones((3, 2)))


if __name__ == '__main__':
    unittest.main()
