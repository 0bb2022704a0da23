"""
Degrees of the hypergraph and the propagation operator

    Theta = Dv^-1/2 U H W De^-1 H^T U Dv^-1/2

which moves information from the nodes to their hyperedges and back. The
operator is kept factored (H, the weights and the degree vectors) and applied
to dense matrices without ever building the N x N matrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from personify.model import Hypergraph


@dataclass(frozen=True, eq=False)
class DegreeData:
    # d_v[u] = sum_k W[k] H[u, k]
    d_v: np.ndarray
    # d_e[k] = sum_u U[u] H[u, k]
    d_e: np.ndarray


def degrees(graph: Hypergraph) -> DegreeData:
    incidence = graph.incidence()
    return DegreeData(d_v=incidence @ graph.edge_weights,
                      d_e=incidence.T @ graph.node_weights)


class PropagationOperator:
    """
    Isolated nodes (d_v = 0) get a zero entry in Dv^-1/2, so their rows and
    columns of the operator are zero.
    """

    def __init__(self, graph: Hypergraph) -> None:
        self.num_nodes = graph.num_nodes
        self.incidence = graph.incidence()
        self.node_weights = graph.node_weights
        self.edge_weights = graph.edge_weights
        self.degrees = degrees(graph)

        d_v = self.degrees.d_v
        dv_inv_sqrt = np.zeros_like(d_v)
        np.divide(1.0, np.sqrt(d_v), out=dv_inv_sqrt, where=d_v > 0)
        self.dv_inv_sqrt = dv_inv_sqrt
        # Diagonal factors on both sides and in the middle of H ... H^T
        self._outer = dv_inv_sqrt * self.node_weights
        self._inner = self.edge_weights / self.degrees.d_e

    def apply(self, x: np.ndarray) -> np.ndarray:
        """
        Returns Theta @ x for an N x d (or length N) array.
        """

        vector = x.ndim == 1
        if vector:
            x = x[:, None]
        if x.shape[0] != self.num_nodes:
            raise ValueError(f"Expected {self.num_nodes} rows, got"
                             f" {x.shape[0]}")

        y = self._outer[:, None] * x
        y = self._inner[:, None] * (self.incidence.T @ y)
        y = self._outer[:, None] * (self.incidence @ y)
        return y[:, 0] if vector else y

    def matrix(self) -> sp.csr_matrix:
        outer = sp.diags(self._outer)
        return (outer @ self.incidence @ sp.diags(self._inner)
                @ self.incidence.T @ outer).tocsr()

    def laplacian(self) -> sp.csr_matrix:
        """
        Delta = I - Theta.
        """

        return (sp.identity(self.num_nodes, format='csr')
                - self.matrix()).tocsr()


def propagation_operator(graph: Hypergraph) -> PropagationOperator:
    return PropagationOperator(graph)
