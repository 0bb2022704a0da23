"""
Loading, validation and anonymization of the dataset files:
    * The users file: one JSON object per line, with a required `id` field.
    * The edges file: comma separated values with the `src,dst,kind` header.
    * The optional groups catalogue: one group name per line, so that groups
      without members are also known.

External user ids are re-mapped to dense integers in order of appearance in
the users file, and the mapping is kept in the bundle.
"""

import csv
import json
import logging
import dataclasses
from enum import Enum
from dataclasses import dataclass, field
from typing import (Any, Dict, Iterable, List, Mapping, Optional, Sequence,
                    Tuple)

from personify import PersonifyError
from personify.model import (AttributeValue, LABEL_KEYS, LabelParseError,
                             Scheme, UserRecord, label_of, parse_enneagram,
                             parse_mbti)


# The attributes read from the users file, in the order used for the
# prompts and the raw features. Missing ones are stored as None.
KNOWN_ATTRIBUTES = ('gender', 'sexual', 'location', 'about', 'occupation',
                    'relationship')

# Fields of the users file that aren't attributes.
RESERVED_FIELDS = ('id', 'username', 'followers', 'groups', 'mbti',
                   'enneagram')


class IngestError(PersonifyError, ValueError):
    """
    Raised when the dataset files can't be loaded: malformed lines, duplicate
    ids... Dangling edges aren't errors, they are dropped with a warning.
    """


class EdgeKind(Enum):
    FOLLOW = 'FOLLOW'
    QUOTE = 'QUOTE'
    MENTION = 'MENTION'
    OTHER = 'OTHER'

    @classmethod
    def parse(cls, raw: str) -> 'EdgeKind':
        try:
            return cls[raw.strip().upper()]
        except KeyError:
            return cls.OTHER


@dataclass(frozen=True)
class EdgeRecord:
    src: int
    dst: int
    kind: EdgeKind = EdgeKind.OTHER


@dataclass(frozen=True)
class DatasetBundle:
    users: Tuple[UserRecord, ...]
    edges: Tuple[EdgeRecord, ...] = ()
    # Group name -> member ids, in order of first appearance.
    group_index: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)
    # External id (as a string) -> dense id.
    id_map: Mapping[str, int] = field(default_factory=dict)
    # Problems found while loading that didn't stop it.
    warnings: Tuple[str, ...] = ()

    @property
    def num_users(self) -> int:
        return len(self.users)

    def labels(self, scheme: Scheme) -> List[Optional[int]]:
        """
        The class index of every user for the scheme, None if unlabeled.
        """

        labels = []
        for user in self.users:
            label = label_of(user, scheme)
            labels.append(None if label is None else label.class_index)
        return labels


@dataclass
class ValidationReport:
    num_users: int
    num_edges: int
    num_groups: int
    # Attribute name -> number of users where it's missing.
    missing_attributes: Dict[str, int]
    # Scheme name -> fraction of users that carry it.
    label_coverage: Dict[str, float]
    isolated_nodes: List[int]
    empty_groups: List[str]
    warnings: List[str]

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def build_group_index(users: Tuple[UserRecord, ...],
                      catalogue: Tuple[str, ...] = ()
                      ) -> Dict[str, Tuple[int, ...]]:
    index: Dict[str, List[int]] = {name: [] for name in catalogue}
    for user in users:
        for name in user.group_names:
            members = index.setdefault(name, [])
            if user.user_id not in members:
                members.append(user.user_id)
    return {name: tuple(members) for name, members in index.items()}


def _parse_user(line_no: int, data: Dict[str, Any], user_id: int,
                warnings: List[str]) -> UserRecord:
    """
    Converts a users file object into a record. Unparsable labels are
    dropped with a warning, since the raw data is known to be fragmented.
    """

    attributes: Dict[str, AttributeValue] = {
        name: data.get(name) for name in KNOWN_ATTRIBUTES}
    for key, value in data.items():
        if key not in RESERVED_FIELDS and key not in attributes:
            attributes[key] = value
    for key, value in attributes.items():
        if isinstance(value, str) and value.strip() == '':
            attributes[key] = None
        elif value is not None and not isinstance(value, (str, int, float)):
            raise IngestError(f"Line {line_no}: attribute '{key}' must be a"
                              f" scalar or a string")

    raw = data.get('followers')
    if raw in (None, ''):
        followers = 0
    elif isinstance(raw, float) and not raw.is_integer():
        raise IngestError(f"Line {line_no}: 'followers' must be an integer,"
                          f" got {raw}")
    else:
        try:
            followers = int(raw)
        except (TypeError, ValueError, OverflowError):
            raise IngestError(f"Line {line_no}: 'followers' must be an"
                              f" integer")
    if followers < 0:
        raise IngestError(f"Line {line_no}: 'followers' must be non-negative")

    groups = data.get('groups') or []
    if not isinstance(groups, list):
        raise IngestError(f"Line {line_no}: 'groups' must be a list")

    mbti = None
    if data.get('mbti') not in (None, ''):
        try:
            mbti = parse_mbti(str(data['mbti']))
        except LabelParseError as e:
            warnings.append(f"Line {line_no}: dropping MBTI label ({e})")

    enneagram = None
    if data.get('enneagram') not in (None, ''):
        try:
            enneagram = parse_enneagram(str(data['enneagram']))
        except LabelParseError as e:
            warnings.append(f"Line {line_no}: dropping Enneagram label ({e})")

    return UserRecord(
        user_id=user_id,
        username=str(data.get('username') or ''),
        attributes=attributes,
        follower_count=followers,
        group_names=tuple(str(name) for name in groups),
        mbti=mbti,
        enneagram=enneagram)


def parse_users(objects: Iterable[Tuple[int, Any]], source: str = '<memory>'
                ) -> Tuple[Tuple[UserRecord, ...], Dict[str, int], List[str]]:
    """
    Converts (line number, decoded JSON object) pairs into records, giving
    them dense ids in order.
    """

    users = []
    id_map: Dict[str, int] = {}
    warnings: List[str] = []

    for line_no, data in objects:
        if not isinstance(data, dict) or data.get('id') in (None, ''):
            raise IngestError(f"{source}, line {line_no}: missing 'id'"
                              f" field")

        external_id = str(data['id'])
        if external_id in id_map:
            raise IngestError(f"{source}, line {line_no}: duplicate user id"
                              f" '{external_id}'")
        id_map[external_id] = len(users)
        users.append(_parse_user(line_no, data, len(users), warnings))

    return tuple(users), id_map, warnings


def load_users(users_path: str) -> Tuple[Tuple[UserRecord, ...],
                                         Dict[str, int], List[str]]:
    objects = []
    with open(users_path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if line.strip() == '':
                continue
            try:
                objects.append((line_no, json.loads(line)))
            except json.decoder.JSONDecodeError as e:
                raise IngestError(f"{users_path}, line {line_no}: invalid"
                                  f" JSON ({e})")

    return parse_users(objects, users_path)


def bundle_from_records(records: Sequence[Mapping[str, Any]],
                        edges: Sequence[Tuple[str, str, str]] = (),
                        catalogue: Sequence[str] = ()) -> DatasetBundle:
    """
    Builds a bundle from in-memory users file objects and (src, dst, kind)
    rows with external ids, with the same rules as `load_dataset`.
    """

    users, id_map, warnings = parse_users(
        ((i, dict(record)) for i, record in enumerate(records, start=1)))
    edge_records = []
    for src, dst, kind in edges:
        src, dst = str(src), str(dst)
        if src not in id_map or dst not in id_map or src == dst:
            warnings.append(f"Dropping edge {src} -> {dst}")
            continue
        edge_records.append(EdgeRecord(id_map[src], id_map[dst],
                                       EdgeKind.parse(kind)))
    return DatasetBundle(users=users, edges=tuple(edge_records),
                         group_index=build_group_index(users,
                                                       tuple(catalogue)),
                         id_map=id_map, warnings=tuple(warnings))


def load_edges(edges_path: str, id_map: Mapping[str, int]
               ) -> Tuple[Tuple[EdgeRecord, ...], List[str]]:
    edges = []
    warnings: List[str] = []

    with open(edges_path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] \
                != ['src', 'dst']:
            raise IngestError(f"{edges_path}, line 1: expected the header"
                              f" 'src,dst,kind'")

        for row in reader:
            line_no = reader.line_num
            if not row or all(cell.strip() == '' for cell in row):
                continue
            if len(row) not in (2, 3):
                raise IngestError(f"{edges_path}, line {line_no}: expected 3"
                                  f" columns, got {len(row)}")

            src, dst = row[0].strip(), row[1].strip()
            kind = EdgeKind.parse(row[2]) if len(row) == 3 else EdgeKind.OTHER
            missing = [x for x in (src, dst) if x not in id_map]
            if missing:
                warnings.append(f"{edges_path}, line {line_no}: dropping edge"
                                f" with unknown user {missing[0]}")
                continue
            if src == dst:
                warnings.append(f"{edges_path}, line {line_no}: dropping"
                                f" self-loop on user {src}")
                continue
            edges.append(EdgeRecord(id_map[src], id_map[dst], kind))

    return tuple(edges), warnings


def load_dataset(users_path: str, edges_path: Optional[str] = None,
                 groups_path: Optional[str] = None) -> DatasetBundle:
    """
    Loads and validates the dataset files. Loading is deterministic: the same
    bytes always produce the same bundle, id mapping included.
    """

    users, id_map, warnings = load_users(users_path)
    logging.info("Loaded %d users from %s", len(users), users_path)

    edges: Tuple[EdgeRecord, ...] = ()
    if edges_path is not None:
        edges, edge_warnings = load_edges(edges_path, id_map)
        warnings.extend(edge_warnings)
        logging.info("Loaded %d edges from %s", len(edges), edges_path)

    catalogue: Tuple[str, ...] = ()
    if groups_path is not None:
        with open(groups_path, 'r', encoding='utf-8') as f:
            catalogue = tuple(line.strip() for line in f if line.strip())

    for msg in warnings:
        logging.warning(msg)

    return DatasetBundle(users=users, edges=edges,
                         group_index=build_group_index(users, catalogue),
                         id_map=id_map, warnings=tuple(warnings))


def strip_labels(bundle: DatasetBundle) -> DatasetBundle:
    """
    Returns a copy of the bundle without personality labels, neither in the
    label fields nor in the attribute map, so that they can't leak into the
    prompts. The original bundle isn't modified.
    """

    users = []
    for user in bundle.users:
        attributes = {key: value for key, value in user.attributes.items()
                      if key.strip().lower() not in LABEL_KEYS}
        users.append(dataclasses.replace(user, attributes=attributes,
                                         mbti=None, enneagram=None))
    return dataclasses.replace(bundle, users=tuple(users))


def validate(bundle: DatasetBundle) -> ValidationReport:
    attribute_names: List[str] = []
    for user in bundle.users:
        for key in user.attributes:
            if key not in attribute_names:
                attribute_names.append(key)

    missing = {name: 0 for name in attribute_names}
    for user in bundle.users:
        for name in attribute_names:
            if user.attributes.get(name) is None:
                missing[name] += 1

    coverage = {}
    for scheme in Scheme:
        labeled = sum(1 for user in bundle.users
                      if label_of(user, scheme) is not None)
        coverage[scheme.name] = labeled / bundle.num_users \
            if bundle.num_users else 0.0

    connected = set()
    for edge in bundle.edges:
        connected.update((edge.src, edge.dst))
    isolated = [user.user_id for user in bundle.users
                if not user.group_names and user.user_id not in connected]

    empty_groups = [name for name, members in bundle.group_index.items()
                    if len(members) == 0]

    return ValidationReport(
        num_users=bundle.num_users,
        num_edges=len(bundle.edges),
        num_groups=len(bundle.group_index),
        missing_attributes=missing,
        label_coverage=coverage,
        isolated_nodes=isolated,
        empty_groups=empty_groups,
        warnings=list(bundle.warnings))
