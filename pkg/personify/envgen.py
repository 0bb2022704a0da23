"""
Construction of the three social environment families and assembly of the
final hypergraph:
    * TOP: each node together with its k-hop neighbours in the interaction
      network, which is treated as undirected with all edge kinds merged.
    * SEM: each node together with its K nearest neighbours by feature
      similarity.
    * FOR: each forum group with at least two members.

Inside a family, hyperedges with identical member sets are deduplicated,
keeping the first one. The same member set may appear once per family.
"""

import logging
from enum import Enum
from dataclasses import dataclass
from typing import (FrozenSet, Iterable, List, Mapping, Optional, Sequence,
                    Tuple)

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from sklearn.metrics.pairwise import cosine_similarity, euclidean_distances

from personify import PersonifyError
from personify.ingest import DatasetBundle, EdgeRecord
from personify.model import (EdgeFamily, FeatureMatrix, Hyperedge, Hypergraph,
                             HypergraphError, as_feature_matrix)


# Number of source rows processed at once for the neighbourhood searches, so
# that the dense blocks stay small on large datasets.
CHUNK_SIZE = 1024

Members = Tuple[int, ...]


class Similarity(Enum):
    COSINE = 'COSINE'
    EUCLIDEAN = 'EUCLIDEAN'


@dataclass(frozen=True)
class HyperedgeSpec:
    kinds: FrozenSet[EdgeFamily] = frozenset(EdgeFamily)
    k_hop: int = 2
    knn_k: int = 10
    similarity: Similarity = Similarity.COSINE
    node_weight: float = 1.0
    edge_weight: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kinds', frozenset(self.kinds))
        if not self.kinds:
            raise HypergraphError("At least one hyperedge family is needed")
        if self.k_hop < 1 or self.knn_k < 1:
            raise HypergraphError("k_hop and knn_k must be at least 1")
        if self.node_weight <= 0 or self.edge_weight <= 0:
            raise HypergraphError("Node and hyperedge weights must be"
                                  " strictly positive")

    @property
    def name(self) -> str:
        """
        Identifier of the families in their fixed order, like 'TOP+FOR'.
        """

        return '+'.join(kind.name for kind in EdgeFamily
                        if kind in self.kinds)


def parse_kinds(raw: str) -> FrozenSet[EdgeFamily]:
    """
    Parses family lists like 'TOP,SEM' or 'TOP+FOR'.
    """

    names = raw.replace('+', ',').split(',')
    try:
        return frozenset(EdgeFamily[name.strip().upper()] for name in names
                         if name.strip())
    except KeyError as e:
        raise HypergraphError(f"Unknown hyperedge family {e}. Use TOP, SEM"
                              f" or FOR.")


def _dedup(candidates: Iterable[Members]) -> List[Members]:
    seen = set()
    unique = []
    for members in candidates:
        if members not in seen:
            seen.add(members)
            unique.append(members)
    return unique


def topology_hyperedges(edges: Sequence[EdgeRecord], num_nodes: int,
                        k_hop: int) -> List[Members]:
    """
    One candidate hyperedge {v} plus its neighbours within `k_hop` hops for
    every node, by breadth-first search on the undirected interaction graph.
    Isolated nodes would form hyperedges of size 1 and are skipped.
    """

    if k_hop < 1:
        raise HypergraphError("k_hop must be at least 1")
    if not edges or num_nodes == 0:
        return []

    src = np.array([edge.src for edge in edges])
    dst = np.array([edge.dst for edge in edges])
    if max(src.max(), dst.max()) >= num_nodes:
        raise HypergraphError(f"Edge endpoint outside of 0..{num_nodes - 1}")
    adjacency = sp.csr_matrix((np.ones(len(edges)), (src, dst)),
                              shape=(num_nodes, num_nodes))

    candidates = []
    for start in range(0, num_nodes, CHUNK_SIZE):
        sources = np.arange(start, min(start + CHUNK_SIZE, num_nodes))
        # Unweighted shortest paths give the hop count, and `limit` stops the
        # search at k hops.
        hops = dijkstra(adjacency, directed=False, unweighted=True,
                        indices=sources, limit=k_hop)
        for row in hops:
            members = tuple(int(v) for v in np.flatnonzero(np.isfinite(row)))
            if len(members) > 1:
                candidates.append(members)

    return _dedup(candidates)


def _similarities(features: FeatureMatrix, rows: np.ndarray,
                  similarity: Similarity,
                  zero_rows: np.ndarray) -> np.ndarray:
    """
    Similarity of the nodes in `rows` against every node, with -inf for the
    pairs involving a zero-norm row under the cosine similarity.
    """

    if similarity == Similarity.EUCLIDEAN:
        return -euclidean_distances(features[rows], features)

    block = cosine_similarity(features[rows], features)
    block[zero_rows[rows], :] = -np.inf
    block[:, zero_rows] = -np.inf
    return block


def semantic_hyperedges(features: FeatureMatrix, knn_k: int,
                        similarity: Similarity = Similarity.COSINE
                        ) -> List[Members]:
    """
    One hyperedge {v} plus its `knn_k` most similar nodes for every node.
    Ties are broken in favour of the lower node id, and a node is never its
    own neighbour.
    """

    try:
        features = as_feature_matrix(features)
    except PersonifyError as e:
        raise HypergraphError(f"Invalid semantic features: {e}") from None
    num_nodes = features.shape[0]
    if knn_k < 1 or knn_k >= num_nodes:
        raise HypergraphError(f"knn_k must be in 1..{num_nodes - 1} for"
                              f" {num_nodes} nodes, got {knn_k}")

    zero_rows = np.linalg.norm(features, axis=1) == 0
    if similarity == Similarity.COSINE and np.any(zero_rows):
        logging.warning("%d nodes have zero-norm features, their cosine"
                        " similarity to every other node is -inf",
                        int(zero_rows.sum()))

    ids = np.arange(num_nodes)
    candidates = []
    for start in range(0, num_nodes, CHUNK_SIZE):
        rows = np.arange(start, min(start + CHUNK_SIZE, num_nodes))
        block = _similarities(features, rows, similarity, zero_rows)
        for v, scores in zip(rows, block):
            # Descending score, then ascending id. The node itself goes last.
            keys = -scores
            keys[v] = np.inf
            order = np.lexsort((ids, keys))
            neighbours = [int(u) for u in order if u != v][:knn_k]
            candidates.append(tuple(sorted([int(v)] + neighbours)))

    return _dedup(candidates)


def forum_hyperedges(group_index: Mapping[str, Sequence[int]]
                     ) -> List[Members]:
    """
    One hyperedge per group with at least two members, in the order of the
    group index.
    """

    candidates = []
    for members in group_index.values():
        members = tuple(sorted(set(int(m) for m in members)))
        if len(members) >= 2:
            candidates.append(members)
    return _dedup(candidates)


def assemble(spec: HyperedgeSpec, bundle: DatasetBundle,
             features: Optional[FeatureMatrix] = None) -> Hypergraph:
    """
    Builds the requested families and concatenates them in the order TOP,
    SEM, FOR. Nodes that appear in no hyperedge stay in the graph as isolated
    nodes.
    """

    has_sem = EdgeFamily.SEM in spec.kinds
    if has_sem and features is None:
        raise HypergraphError("The SEM family needs a feature matrix")
    if not has_sem and features is not None:
        raise HypergraphError("Features were given but the SEM family"
                              " wasn't requested")
    num_nodes = bundle.num_users
    if features is not None and features.shape[0] != num_nodes:
        raise HypergraphError(f"The features have {features.shape[0]} rows"
                              f" for {num_nodes} users")

    families = []
    for kind in EdgeFamily:
        if kind not in spec.kinds:
            continue
        if kind == EdgeFamily.TOP:
            members = topology_hyperedges(bundle.edges, num_nodes,
                                          spec.k_hop)
        elif kind == EdgeFamily.SEM:
            members = semantic_hyperedges(features, spec.knn_k,
                                          spec.similarity)
        else:
            members = forum_hyperedges(bundle.group_index)
        logging.info("Built %d %s hyperedges", len(members), kind.name)
        families.extend((kind, m) for m in members)

    if not families:
        raise HypergraphError(f"No hyperedges were built for {spec.name}, the"
                              f" hypergraph can't be trained")

    hyperedges = tuple(Hyperedge(edge_id, kind, members)
                       for edge_id, (kind, members) in enumerate(families))
    return Hypergraph(
        num_nodes=num_nodes,
        hyperedges=hyperedges,
        node_weights=np.full(num_nodes, spec.node_weight),
        edge_weights=np.full(len(hyperedges), spec.edge_weight))
