"""
Domain types and label codecs shared by every other module: the user
records, the personality labels (MBTI and Enneagram) and the hypergraph with
its feature matrix.

All the types are immutable after construction. Their invariants are checked
in `__post_init__`, so an instance that exists is always valid.
"""

import re
from enum import Enum
from types import MappingProxyType
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from personify import PersonifyError


# Attribute values as they come from the users file. None is the explicit
# "unknown" marker, rendered as <Unknown> in the prompts.
AttributeValue = Optional[Union[str, int, float]]

# Node features: N x d matrix of 64-bit floats, all finite.
FeatureMatrix = np.ndarray

# Letters for each MBTI position, in bit order: the first one is 0 and the
# second one is 1.
MBTI_LETTERS = (('E', 'I'), ('S', 'N'), ('T', 'F'), ('J', 'P'))

# Attribute keys that leak the labels, compared in lowercase.
LABEL_KEYS = ('mbti', 'enneagram')


class LabelParseError(PersonifyError, ValueError):
    """
    Raised when an MBTI or Enneagram string can't be parsed. `position` is the
    1-based position of the offending character, when it's known.
    """

    def __init__(self, msg: str, position: Optional[int] = None) -> None:
        super().__init__(msg)
        self.position = position


class HypergraphError(PersonifyError, ValueError):
    """
    Raised when a hypergraph would break its invariants, or when it can't be
    built at all (no hyperedges, missing features...).
    """


class Scheme(Enum):
    """
    The personality taxonomies used as classification targets.
    """

    MBTI16 = 16
    ENNEAGRAM9 = 9

    @property
    def num_classes(self) -> int:
        return self.value

    @classmethod
    def from_name(cls, name: str) -> 'Scheme':
        """
        Accepts the enum names and the short forms used in the config file,
        like 'mbti' or 'enneagram'.
        """

        name = name.strip().upper()
        for scheme in cls:
            if scheme.name == name or scheme.name.rstrip('0123456789') == name:
                return scheme
        raise PersonifyError(f"Unknown personality scheme '{name}'. Use MBTI"
                             f" or ENNEAGRAM.")


class EdgeFamily(Enum):
    """
    The three social environment families: topological neighbours, semantic
    neighbours and forum (interest) groups. The declaration order is the
    order in which the families are concatenated.
    """

    TOP = 'TOP'
    SEM = 'SEM'
    FOR = 'FOR'


@dataclass(frozen=True)
class MbtiCode:
    dichotomies: Tuple[int, int, int, int]

    def __post_init__(self) -> None:
        if len(self.dichotomies) != 4 \
                or any(bit not in (0, 1) for bit in self.dichotomies):
            raise LabelParseError(f"Invalid MBTI dichotomies"
                                  f" {self.dichotomies}")
        object.__setattr__(self, 'dichotomies',
                           tuple(int(bit) for bit in self.dichotomies))

    @property
    def class_index(self) -> int:
        t1, t2, t3, t4 = self.dichotomies
        return 8 * t1 + 4 * t2 + 2 * t3 + t4

    def __str__(self) -> str:
        return format_mbti(self)


@dataclass(frozen=True)
class PersonalityLabel:
    scheme: Scheme
    class_index: int

    def __post_init__(self) -> None:
        if not 0 <= self.class_index < self.scheme.num_classes:
            raise LabelParseError(f"Class index {self.class_index} out of"
                                  f" range for {self.scheme.name}")


@dataclass(frozen=True)
class UserRecord:
    """
    One user's fragmented attributes, group memberships and optional
    personality labels. `attributes` keeps the order of the users file.
    """

    user_id: int
    username: str
    attributes: Mapping[str, AttributeValue] = field(default_factory=dict)
    follower_count: int = 0
    group_names: Tuple[str, ...] = ()
    mbti: Optional[MbtiCode] = None
    enneagram: Optional[int] = None

    def __post_init__(self) -> None:
        if self.user_id < 0:
            raise PersonifyError(f"Negative user id {self.user_id}")
        if self.follower_count < 0:
            raise PersonifyError(f"User {self.user_id} has a negative"
                                 f" follower count")
        if self.enneagram is not None and not 1 <= self.enneagram <= 9:
            raise LabelParseError(f"User {self.user_id} has Enneagram type"
                                  f" {self.enneagram} outside of 1..9")
        object.__setattr__(self, 'attributes',
                           MappingProxyType(dict(self.attributes)))
        object.__setattr__(self, 'group_names', tuple(self.group_names))


def label_of(user: UserRecord, scheme: Scheme) -> Optional[PersonalityLabel]:
    """
    The user's label under `scheme`, or None when it's unknown. Enneagram
    types 1..9 map to classes 0..8.
    """

    if scheme == Scheme.MBTI16:
        if user.mbti is None:
            return None
        return PersonalityLabel(scheme, user.mbti.class_index)

    if user.enneagram is None:
        return None
    return PersonalityLabel(scheme, user.enneagram - 1)


def parse_mbti(code: str) -> MbtiCode:
    """
    Parses a 4-letter MBTI type, case-insensitive. At each position the first
    letter of the pair (E, S, T, J) is 0 and the second one (I, N, F, P) is 1,
    so that INFP is (1, 1, 1, 1).
    """

    code = code.strip()
    if len(code) != 4:
        raise LabelParseError(f"MBTI code '{code}' must have exactly 4"
                              f" letters, got {len(code)}")

    bits = []
    for position, (letter, pair) in enumerate(zip(code.upper(),
                                                  MBTI_LETTERS), start=1):
        if letter not in pair:
            raise LabelParseError(
                f"Invalid MBTI code '{code}': position {position} must be"
                f" {pair[0]} or {pair[1]}, got '{letter}'", position)
        bits.append(pair.index(letter))

    return MbtiCode(tuple(bits))


def format_mbti(code: MbtiCode) -> str:
    return ''.join(pair[bit] for pair, bit in zip(MBTI_LETTERS,
                                                  code.dichotomies))


def mbti_from_index(class_index: int) -> MbtiCode:
    if not 0 <= class_index < 16:
        raise LabelParseError(f"MBTI class index {class_index} out of 0..15")
    return MbtiCode(tuple((class_index >> shift) & 1
                          for shift in (3, 2, 1, 0)))


def parse_enneagram(raw: str) -> int:
    """
    Returns the core Enneagram type. Wing suffixes like "4w5" are discarded,
    only the leading digit is kept.
    """

    raw = str(raw).strip()
    if raw == '':
        raise LabelParseError("Empty Enneagram type")

    match = re.match(r"([0-9]+)(?:\s*w\s*[0-9]+)?", raw, re.IGNORECASE)
    if match is None:
        raise LabelParseError(f"Invalid Enneagram type '{raw}': it must start"
                              f" with a digit", 1)

    core = int(match.group(1))
    if not 1 <= core <= 9:
        raise LabelParseError(f"Invalid Enneagram type '{raw}': {core} is"
                              f" outside of 1..9", 1)
    return core


def class_name(scheme: Scheme, class_index: int) -> str:
    """
    Human readable name of a class, like 'INFP' or '4'.
    """

    if scheme == Scheme.MBTI16:
        return format_mbti(mbti_from_index(class_index))
    return str(class_index + 1)


def one_hot(label: PersonalityLabel) -> np.ndarray:
    vector = np.zeros(label.scheme.num_classes)
    vector[label.class_index] = 1.0
    return vector


def as_feature_matrix(values: Union[np.ndarray, Sequence]) -> FeatureMatrix:
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise PersonifyError(f"Feature matrix must be 2-dimensional, got"
                             f" shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise PersonifyError("Feature matrix has non-finite entries")
    return matrix


@dataclass(frozen=True)
class Hyperedge:
    edge_id: int
    kind: EdgeFamily
    members: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'members',
                           tuple(sorted({int(m) for m in self.members})))


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """
    Node set plus typed hyperedges, with the diagonal node weights U and
    hyperedge weights W.
    """

    num_nodes: int
    hyperedges: Tuple[Hyperedge, ...]
    node_weights: np.ndarray
    edge_weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'hyperedges', tuple(self.hyperedges))
        object.__setattr__(self, 'node_weights',
                           np.asarray(self.node_weights, dtype=np.float64))
        object.__setattr__(self, 'edge_weights',
                           np.asarray(self.edge_weights, dtype=np.float64))

        if self.num_nodes < 0:
            raise HypergraphError("Negative number of nodes")
        if self.node_weights.shape != (self.num_nodes,):
            raise HypergraphError(f"Expected {self.num_nodes} node weights,"
                                  f" got {self.node_weights.shape}")
        if self.edge_weights.shape != (len(self.hyperedges),):
            raise HypergraphError(f"Expected {len(self.hyperedges)} hyperedge"
                                  f" weights, got {self.edge_weights.shape}")
        if np.any(self.node_weights <= 0) or np.any(self.edge_weights <= 0):
            raise HypergraphError("Node and hyperedge weights must be"
                                  " strictly positive")

        ids = set()
        seen = set()
        for edge in self.hyperedges:
            if edge.edge_id in ids:
                raise HypergraphError(f"Duplicate edge id {edge.edge_id}")
            ids.add(edge.edge_id)
            if len(edge.members) == 0:
                raise HypergraphError(f"Hyperedge {edge.edge_id} is empty")
            if edge.members[0] < 0 or edge.members[-1] >= self.num_nodes:
                raise HypergraphError(f"Hyperedge {edge.edge_id} has members"
                                      f" outside of 0..{self.num_nodes - 1}")
            if (edge.kind, edge.members) in seen:
                raise HypergraphError(f"Hyperedge {edge.edge_id} duplicates"
                                      f" another {edge.kind.name} hyperedge")
            seen.add((edge.kind, edge.members))

    @property
    def num_edges(self) -> int:
        return len(self.hyperedges)

    def incidence(self) -> sp.csr_matrix:
        """
        The binary |V| x |E| incidence matrix H.
        """

        rows = [member for edge in self.hyperedges for member in edge.members]
        cols = [col for col, edge in enumerate(self.hyperedges)
                for _ in edge.members]
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)),
                             shape=(self.num_nodes, self.num_edges))

    def family_sizes(self) -> Mapping[EdgeFamily, int]:
        sizes = {kind: 0 for kind in EdgeFamily}
        for edge in self.hyperedges:
            sizes[edge.kind] += 1
        return sizes

    def subgraph(self, nodes: Sequence[int]) -> 'Hypergraph':
        """
        Induced sub-hypergraph on `nodes`, relabelled to 0..len(nodes)-1 in the
        given order. Hyperedges left empty are dropped, as well as those that
        become duplicates of another one of the same kind.
        """

        mapping = {int(node): new for new, node in enumerate(nodes)}
        edges = []
        weights = []
        seen = set()
        for edge, weight in zip(self.hyperedges, self.edge_weights):
            members = tuple(sorted(mapping[m] for m in edge.members
                                   if m in mapping))
            if not members or (edge.kind, members) in seen:
                continue
            seen.add((edge.kind, members))
            edges.append(Hyperedge(len(edges), edge.kind, members))
            weights.append(weight)

        return Hypergraph(len(mapping), tuple(edges),
                          self.node_weights[list(mapping)],
                          np.asarray(weights, dtype=np.float64))
