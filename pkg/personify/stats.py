"""
Dataset analysis: label distributions, cross-tabulations between labels and
attributes, and power-law fits of heavy-tailed counts like followers or
group sizes.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from personify import PersonifyError
from personify.model import (MBTI_LETTERS, Scheme, UserRecord, class_name,
                             label_of)


# Minimum number of values in the fitted tail.
MIN_TAIL = 10

# Search interval of the exponent for the exact likelihood.
ALPHA_BOUNDS = (1.0001, 20.0)

ATTRIBUTE_AXES = ('gender', 'sexual', 'location', 'relationship',
                  'occupation')


class StatsError(PersonifyError, ValueError):
    pass


@dataclass(frozen=True)
class DistributionRow:
    type_name: str
    count: int
    proportion: float


@dataclass
class Crosstab:
    row_axis: str
    col_axis: str
    row_labels: List[str]
    col_labels: List[str]
    counts: np.ndarray
    # Users missing at least one of the two values.
    excluded: int = 0

    def to_dict(self) -> Dict:
        return {
            'row_axis': self.row_axis,
            'col_axis': self.col_axis,
            'row_labels': list(self.row_labels),
            'col_labels': list(self.col_labels),
            'counts': self.counts.astype(int).tolist(),
            'excluded': self.excluded
        }


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    xmin: int
    n_tail: int
    ks_distance: float
    method: str = 'exact'


def distribution(users: Sequence[UserRecord],
                 scheme: Scheme) -> List[DistributionRow]:
    """
    Count and proportion of every type of the scheme, in class order, over
    the users that carry the label. Types without users are kept with a
    count of 0.
    """

    counts = np.zeros(scheme.num_classes, dtype=np.int64)
    for user in users:
        label = label_of(user, scheme)
        if label is not None:
            counts[label.class_index] += 1
    total = int(counts.sum())
    if total == 0:
        raise StatsError(f"No user carries a {scheme.name} label")
    return [DistributionRow(class_name(scheme, i), int(count), count / total)
            for i, count in enumerate(counts)]


AxisValues = Tuple[List[Tuple[str, ...]], List[str]]


def _known(value: Optional[str]) -> Tuple[str, ...]:
    return () if value is None else (value,)


def _label_axis(users: Sequence[UserRecord], scheme: Scheme) -> AxisValues:
    values = []
    for user in users:
        label = label_of(user, scheme)
        values.append(() if label is None
                      else (class_name(scheme, label.class_index),))
    order = [class_name(scheme, i) for i in range(scheme.num_classes)]
    return values, order


def _dichotomy_axis(position: int) -> Callable[[Sequence[UserRecord]],
                                                AxisValues]:
    def axis(users: Sequence[UserRecord]) -> AxisValues:
        pair = MBTI_LETTERS[position]
        values = [() if user.mbti is None
                  else (pair[user.mbti.dichotomies[position]],)
                  for user in users]
        return values, list(pair)
    return axis


def _attribute_axis(name: str) -> Callable[[Sequence[UserRecord]],
                                           AxisValues]:
    def axis(users: Sequence[UserRecord]) -> AxisValues:
        values = []
        for user in users:
            value = user.attributes.get(name)
            values.append(_known(None if value is None
                                 else ' '.join(str(value).split()) or None))
        return values, sorted({v for vs in values for v in vs})
    return axis


def _followers_quartile(users: Sequence[UserRecord]) -> AxisValues:
    """
    Q1..Q4 by the quartiles of the follower counts of all the users.
    """

    counts = np.array([user.follower_count for user in users],
                      dtype=np.float64)
    labels = ['Q1', 'Q2', 'Q3', 'Q4']
    if counts.size == 0:
        return [], labels
    edges = np.quantile(counts, [0.25, 0.5, 0.75])
    bins = np.searchsorted(edges, counts, side='left')
    return [(labels[b],) for b in bins], labels


def _groups_axis(users: Sequence[UserRecord]) -> AxisValues:
    """
    Every group a user belongs to, ordered by first appearance like the
    group index built without a catalogue.
    """

    values = [tuple(dict.fromkeys(user.group_names)) for user in users]
    order = list(dict.fromkeys(name for names in values for name in names))
    return values, order


AXES: Dict[str, Callable[[Sequence[UserRecord]], AxisValues]] = {
    'mbti': lambda users: _label_axis(users, Scheme.MBTI16),
    'enneagram': lambda users: _label_axis(users, Scheme.ENNEAGRAM9),
    **{name: _attribute_axis(name) for name in ATTRIBUTE_AXES},
    'followers_quartile': _followers_quartile,
    'groups': _groups_axis,
    **{f'mbti_t{i + 1}': _dichotomy_axis(i) for i in range(4)}
}


def crosstab(users: Sequence[UserRecord], axis_a: str, axis_b: str,
             group_order: Optional[Sequence[str]] = None) -> Crosstab:
    """
    Counts of the users by their value on both axes. Label axes list every
    type of the scheme, attribute axes the observed values in alphabetical
    order.

    The groups axis is multi-valued: each membership of a user counts once,
    so a user in three groups adds three counts to their row. Its labels
    follow `group_order` when given (the keys of the dataset's group index,
    so that empty groups show up too), and users without groups are
    excluded like users with unknown values.
    """

    for axis in (axis_a, axis_b):
        if axis not in AXES:
            raise StatsError(f"Unknown crosstab axis '{axis}'. Available"
                             f" ones: {', '.join(AXES)}")

    resolved = []
    for axis in (axis_a, axis_b):
        values, labels = AXES[axis](users)
        if axis == 'groups' and group_order is not None:
            labels = list(group_order)
            unknown = {v for vs in values for v in vs} - set(labels)
            if unknown:
                raise StatsError(f"Groups missing from the group order:"
                                 f" {', '.join(sorted(unknown))}")
        resolved.append((values, labels))
    (values_a, labels_a), (values_b, labels_b) = resolved
    index_a = {label: i for i, label in enumerate(labels_a)}
    index_b = {label: i for i, label in enumerate(labels_b)}

    counts = np.zeros((len(labels_a), len(labels_b)), dtype=np.int64)
    excluded = 0
    for many_a, many_b in zip(values_a, values_b):
        if not many_a or not many_b:
            excluded += 1
            continue
        for a in many_a:
            for b in many_b:
                counts[index_a[a], index_b[b]] += 1

    return Crosstab(axis_a, axis_b, labels_a, labels_b, counts, excluded)


def _exact_alpha(tail: np.ndarray, xmin: int) -> float:
    n = tail.size
    log_sum = np.log(tail).sum()

    def negative_log_likelihood(alpha: float) -> float:
        return n * np.log(zeta(alpha, xmin)) + alpha * log_sum

    result = minimize_scalar(negative_log_likelihood, bounds=ALPHA_BOUNDS,
                             method='bounded', options={'xatol': 1e-8})
    return float(result.x)


def _approx_alpha(tail: np.ndarray, xmin: int) -> float:
    return float(1 + tail.size / np.log(tail / (xmin - 0.5)).sum())


def _ks_distance(tail: np.ndarray, xmin: int, alpha: float) -> float:
    """
    Largest gap between the empirical and the fitted complementary CDF,
    P(X >= x), over the observed values.
    """

    unique, counts = np.unique(tail, return_counts=True)
    # Fraction of the tail at or above each unique value
    empirical = 1.0 - np.concatenate(([0], np.cumsum(counts)[:-1])) \
        / tail.size
    fitted = zeta(alpha, unique) / zeta(alpha, xmin)
    return float(np.max(np.abs(empirical - fitted)))


def _fit_tail(values: np.ndarray, xmin: int, method: str) -> PowerLawFit:
    tail = values[values >= xmin]
    if tail.size < MIN_TAIL:
        raise StatsError(f"Only {tail.size} values are >= {xmin}, at least"
                         f" {MIN_TAIL} are needed for a fit")
    if np.all(tail == tail[0]):
        raise StatsError(f"Every value >= {xmin} is {int(tail[0])}, the tail"
                         f" is degenerate")
    if method == 'exact':
        alpha = _exact_alpha(tail, xmin)
    else:
        alpha = _approx_alpha(tail, xmin)
    return PowerLawFit(alpha=alpha, xmin=int(xmin), n_tail=int(tail.size),
                       ks_distance=_ks_distance(tail, xmin, alpha),
                       method=method)


def powerlaw_fit(values: Sequence[int], xmin: Optional[int] = None,
                 method: str = 'exact') -> PowerLawFit:
    """
    Discrete power-law fit of the values >= xmin.

    The exponent is the maximum likelihood estimate with the Hurwitz zeta
    normalization (`method="exact"`) or the closed form
    1 + n / sum(ln(x / (xmin - 0.5))) (`method="approx"`), which is biased
    for small xmin. Without `xmin`, every observed value leaving at least
    `MIN_TAIL` values with two distinct ones is tried, and the one with the
    smallest Kolmogorov-Smirnov distance is kept (the lowest on ties).
    Zeros and negative values are ignored.
    """

    if method not in ('exact', 'approx'):
        raise StatsError(f"Unknown power-law method '{method}', use exact or"
                         f" approx")
    array = np.asarray(values, dtype=np.float64)
    array = array[array > 0]
    if array.size == 0:
        raise StatsError("No positive values to fit")
    if np.any(array != np.floor(array)):
        raise StatsError("Power-law fits need integer values")
    if np.all(array == array[0]):
        raise StatsError(f"All the values are {int(array[0])}, there is no"
                         f" distribution to fit")

    if xmin is not None:
        if xmin < 1:
            raise StatsError(f"xmin must be at least 1, got {xmin}")
        return _fit_tail(array, int(xmin), method)

    best: Optional[PowerLawFit] = None
    for candidate in np.unique(array):
        tail = array[array >= candidate]
        if tail.size < MIN_TAIL or np.all(tail == tail[0]):
            break
        fit = _fit_tail(array, int(candidate), method)
        if best is None or fit.ks_distance < best.ks_distance:
            best = fit
    if best is None:
        raise StatsError(f"No xmin leaves {MIN_TAIL} values with at least"
                         f" two distinct ones")
    return best


def frequency_points(values: Sequence[int]) -> List[Tuple[int, int, float]]:
    """
    (x, count, P(X >= x)) for every distinct positive value, ready for a
    log-log plot.
    """

    array = np.asarray(values, dtype=np.int64)
    array = array[array > 0]
    if array.size == 0:
        return []
    unique, counts = np.unique(array, return_counts=True)
    ccdf = 1.0 - np.concatenate(([0], np.cumsum(counts)[:-1])) / array.size
    return [(int(x), int(c), float(p))
            for x, c, p in zip(unique, counts, ccdf)]


def log_binned(values: Sequence[int],
               bins_per_decade: int = 5) -> List[Tuple[float, int, float]]:
    """
    (bin center, count, density) over logarithmic bins, the density being
    the count divided by the bin width and the number of values.
    """

    array = np.asarray(values, dtype=np.float64)
    array = array[array > 0]
    if array.size == 0:
        return []
    low = np.floor(np.log10(array.min()))
    high = np.ceil(np.log10(array.max())) + 1e-9
    num_bins = max(1, int(np.ceil((high - low) * bins_per_decade)))
    edges = np.logspace(low, high, num_bins + 1)
    counts, _ = np.histogram(array, bins=edges)
    widths = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    return [(float(c), int(n), float(n / (w * array.size)))
            for c, n, w in zip(centers, counts, widths) if n > 0]


@dataclass
class StatsReport:
    distributions: Dict[str, List[DistributionRow]] = field(
        default_factory=dict)
    crosstabs: List[Crosstab] = field(default_factory=list)
    powerlaws: Dict[str, Optional[PowerLawFit]] = field(default_factory=dict)
    # Why a distribution or fit is missing.
    skipped: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'distributions': {
                name: [{'type': r.type_name, 'count': r.count,
                        'proportion': r.proportion} for r in rows]
                for name, rows in self.distributions.items()},
            'crosstabs': [c.to_dict() for c in self.crosstabs],
            'powerlaws': {
                name: None if fit is None else {
                    'alpha': fit.alpha, 'xmin': fit.xmin,
                    'n_tail': fit.n_tail, 'ks_distance': fit.ks_distance,
                    'method': fit.method}
                for name, fit in self.powerlaws.items()},
            'skipped': dict(self.skipped)
        }
