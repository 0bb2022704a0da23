"""
Seeded generators with a known answer: the planted personality dataset used
as the offline fixture, and an exact sampler of discrete power laws.

In the planted dataset the class of a user is mostly decided by the forum
groups they join, so a model that uses the groups can recover it while
the other attributes are pure noise.
"""

import os
import csv
import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import zeta

from personify.ingest import DatasetBundle, bundle_from_records


PLANTED_TYPES = ('INFP', 'INFJ', 'INTP', 'ESTJ')

GENDERS = ('Female', 'Male', 'Non-binary', None)
LOCATIONS = ('Lisbon', 'Toronto', 'Osaka', 'Nairobi', 'Lima', 'Oslo', None)
ABOUT = (
    "Coffee first, questions later.",
    "Reading whatever is on the nearest shelf.",
    "Weekend hiker and weekday spreadsheet person.",
    "Collecting houseplants and opinions.",
    None
)

# Number of values of the power law sampled through the exact CCDF table.
POWERLAW_TABLE_SIZE = 100000


def sample_discrete_powerlaw(alpha: float, size: int, xmin: int = 1,
                             rng: Optional[np.random.Generator] = None
                             ) -> np.ndarray:
    """
    Integers x >= xmin with P(x) proportional to x^-alpha, by inversion of
    the exact complementary CDF zeta(alpha, x) / zeta(alpha, xmin). Beyond
    the table the continuous approximation of the tail is used.
    """

    if alpha <= 1:
        raise ValueError(f"alpha must be greater than 1, got {alpha}")
    if xmin < 1:
        raise ValueError(f"xmin must be at least 1, got {xmin}")
    if rng is None:
        rng = np.random.default_rng()

    support = np.arange(xmin, xmin + POWERLAW_TABLE_SIZE, dtype=np.float64)
    ccdf = zeta(alpha, support) / zeta(alpha, xmin)
    u = rng.uniform(size=size)
    # Number of table values with P(X >= x) >= u
    above = np.searchsorted(-ccdf, -u, side='right')
    samples = xmin + above - 1

    beyond = above == POWERLAW_TABLE_SIZE
    if np.any(beyond):
        last = support[-1]
        scale = (u[beyond] / ccdf[-1]) ** (-1.0 / (alpha - 1.0))
        samples[beyond] = np.floor((last - 0.5) * scale + 0.5)
    return samples.astype(np.int64)


@dataclass
class PlantedData:
    records: List[Dict[str, Any]]
    edges: List[Tuple[str, str, str]]
    groups: List[str]
    # Class index in PLANTED_TYPES of every user.
    classes: np.ndarray

    def bundle(self) -> DatasetBundle:
        return bundle_from_records(self.records, self.edges, self.groups)


def group_name(group: int) -> str:
    return f"circle-{group:02d}"


def planted_dataset(num_users: int = 200, num_groups: int = 20,
                    groups_per_user: int = 3, purity: float = 0.9,
                    follows_per_user: int = 2, followers_alpha: float = 2.5,
                    seed: int = 0) -> PlantedData:
    """
    Users are spread evenly over the four `PLANTED_TYPES`, and so are the
    groups (group g belongs to class g mod 4). Each group a user joins comes
    from their own class with probability `purity`, and so does each account
    they follow. Gender, location and the about text are random, the
    follower counts follow a power law and about a fifth of the users have
    no Enneagram type.
    """

    num_classes = len(PLANTED_TYPES)
    if num_groups < num_classes or num_groups % num_classes:
        raise ValueError(f"The number of groups must be a multiple of"
                         f" {num_classes}")
    if groups_per_user > num_groups // num_classes:
        raise ValueError("Users can't join more groups than their class has")

    rng = np.random.default_rng(seed)
    classes = np.arange(num_users) % num_classes
    groups_of_class = [[g for g in range(num_groups) if g % num_classes == c]
                       for c in range(num_classes)]
    members_of_class = [np.flatnonzero(classes == c)
                        for c in range(num_classes)]
    followers = sample_discrete_powerlaw(followers_alpha, num_users, 1, rng)

    records = []
    for user in range(num_users):
        own = int(classes[user])
        chosen: List[int] = []
        while len(chosen) < groups_per_user:
            if rng.uniform() < purity:
                pool = groups_of_class[own]
            else:
                pool = [g for g in range(num_groups) if g % num_classes != own]
            group = int(pool[rng.integers(len(pool))])
            if group not in chosen:
                chosen.append(group)

        record: Dict[str, Any] = {
            'id': f"u{user:04d}",
            'username': f"user{user:04d}",
            'gender': GENDERS[rng.integers(len(GENDERS))],
            'location': LOCATIONS[rng.integers(len(LOCATIONS))],
            'about': ABOUT[rng.integers(len(ABOUT))],
            'followers': int(followers[user]),
            'groups': [group_name(g) for g in sorted(chosen)],
            'mbti': PLANTED_TYPES[own]
        }
        if rng.uniform() < 0.8:
            record['enneagram'] = f"{int(rng.integers(1, 10))}"
        records.append(record)

    edges = []
    for user in range(num_users):
        own = int(classes[user])
        for _ in range(follows_per_user):
            if rng.uniform() < purity:
                pool = members_of_class[own]
            else:
                pool = np.flatnonzero(classes != own)
            target = int(pool[rng.integers(len(pool))])
            if target != user:
                edges.append((records[user]['id'], records[target]['id'],
                              'FOLLOW'))

    return PlantedData(records=records, edges=edges,
                       groups=[group_name(g) for g in range(num_groups)],
                       classes=classes)


def write_planted(data: PlantedData, out_dir: str) -> Dict[str, str]:
    """
    Writes users.jsonl, edges.csv and groups.txt, and returns their paths.
    """

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        'users_path': os.path.join(out_dir, 'users.jsonl'),
        'edges_path': os.path.join(out_dir, 'edges.csv'),
        'groups_path': os.path.join(out_dir, 'groups.txt')
    }
    with open(paths['users_path'], 'w', encoding='utf-8') as f:
        for record in data.records:
            f.write(json.dumps(record, sort_keys=True) + '\n')
    with open(paths['edges_path'], 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['src', 'dst', 'kind'])
        writer.writerows(data.edges)
    with open(paths['groups_path'], 'w', encoding='utf-8') as f:
        f.write('\n'.join(data.groups) + '\n')
    return paths
