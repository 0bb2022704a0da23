"""
Evaluation protocol: seeded 8:1:1 splits over the labeled users, the
classification metrics, repeated runs with fresh splits and initializations,
and the two experiment grids (hyperedge family ablation and label ratio
sweep).

Splits only cover labeled users. The unlabeled ones still take part in the
propagation, since training is transductive.
"""

import logging
import dataclasses
from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from personify import PersonifyError
from personify.envgen import HyperedgeSpec, assemble
from personify.ingest import DatasetBundle
from personify.model import (EdgeFamily, FeatureMatrix, Hypergraph, Scheme,
                             as_feature_matrix)
from personify.hgnn import TrainConfig
from personify.hgnn.operator import propagation_operator
from personify.hgnn.train import predict, train


METRICS = ('accuracy', 'auc', 'macro_f1', 'micro_f1')

# Every non-empty combination of families, singles first.
ABLATION_SUBSETS = (
    (EdgeFamily.TOP,),
    (EdgeFamily.SEM,),
    (EdgeFamily.FOR,),
    (EdgeFamily.TOP, EdgeFamily.SEM),
    (EdgeFamily.TOP, EdgeFamily.FOR),
    (EdgeFamily.SEM, EdgeFamily.FOR),
    (EdgeFamily.TOP, EdgeFamily.SEM, EdgeFamily.FOR)
)

DEFAULT_FRACTIONS = (0.1, 0.25, 0.5, 0.75, 1.0)


class EvaluationError(PersonifyError, ValueError):
    pass


class FeatureSource(Enum):
    ENHANCED = 'ENHANCED'
    RAW = 'RAW'


@dataclass(frozen=True)
class SplitAssignment:
    train: Tuple[int, ...]
    val: Tuple[int, ...]
    test: Tuple[int, ...]

    def to_dict(self) -> Dict[str, List[int]]:
        return {'train': list(self.train), 'val': list(self.val),
                'test': list(self.test)}


@dataclass
class EvalReport:
    """
    Metrics of one run, or the aggregate of several repetitions. In the
    aggregate the metrics are the means, `std` holds the population standard
    deviations and the confusion matrix is summed over the repetitions.
    """

    accuracy: float
    auc: float
    macro_f1: float
    micro_f1: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    # Classes with at least one test user, the only ones in macro averages.
    classes_present: Tuple[int, ...] = ()
    repetitions: List['EvalReport'] = field(default_factory=list)
    mean: Dict[str, float] = field(default_factory=dict)
    std: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {name: getattr(self, name) for name in METRICS}
        data['confusion'] = self.confusion.astype(int).tolist()
        data['precision'] = self.precision.tolist()
        data['recall'] = self.recall.tolist()
        data['classes_present'] = list(self.classes_present)
        if self.repetitions:
            data['repetitions'] = [r.to_dict() for r in self.repetitions]
            data['mean'] = dict(self.mean)
            data['std'] = dict(self.std)
        return data

    def summary_row(self) -> List[float]:
        """
        Mean and standard deviation of every metric, in `METRICS` order.
        """

        row = []
        for name in METRICS:
            row.append(self.mean.get(name, getattr(self, name)))
            row.append(self.std.get(name, 0.0))
        return row


SUMMARY_HEADER = [f'{name}_{stat}' for name in METRICS
                  for stat in ('mean', 'std')]


@dataclass
class ExperimentData:
    """
    Everything an experiment needs besides the configuration. `features`
    maps each available source to its node feature matrix.
    `semantic_features` are used to build the SEM family, and default to the
    node features of the run.
    """

    bundle: DatasetBundle
    scheme: Scheme
    features: Mapping[FeatureSource, FeatureMatrix] = field(
        default_factory=dict)
    semantic_features: Optional[FeatureMatrix] = None

    def node_features(self, source: FeatureSource) -> FeatureMatrix:
        matrix = self.features.get(source)
        if matrix is None:
            hint = "run enhance and embed first" \
                if source == FeatureSource.ENHANCED else "load the dataset"
            raise EvaluationError(f"No {source.name.lower()} features are"
                                  f" available, {hint}")
        return as_feature_matrix(matrix)


def split(labeled_ids: Sequence[int],
          ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> SplitAssignment:
    """
    Shuffles the ids with the seed and cuts them in three contiguous parts.
    The part sizes are the floors of the ratios, and the leftover ids go one
    at a time to test, validation and train, in that order. Validation and
    test always get at least one id, taken from train.
    """

    ids = np.asarray(labeled_ids, dtype=np.int64)
    n = ids.size
    if n < 3:
        raise EvaluationError(f"At least 3 labeled users are needed to split,"
                              f" got {n}")
    if len(set(ids.tolist())) != n:
        raise EvaluationError("The labeled ids contain duplicates")
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) <= 0:
        raise EvaluationError(f"Invalid split ratios {ratios}")

    total = float(sum(ratios))
    sizes = [int(np.floor(n * r / total)) for r in ratios]
    leftover = n - sum(sizes)
    order = (2, 1, 0)
    for i in range(leftover):
        sizes[order[i % 3]] += 1
    for part in (1, 2):
        if sizes[part] == 0:
            sizes[part] = 1
            sizes[0] -= 1

    shuffled = ids[np.random.default_rng(seed).permutation(n)]
    n_train, n_val = sizes[0], sizes[1]
    return SplitAssignment(
        train=tuple(int(i) for i in shuffled[:n_train]),
        val=tuple(int(i) for i in shuffled[n_train:n_train + n_val]),
        test=tuple(int(i) for i in shuffled[n_train + n_val:]))


def subsample(ids: Sequence[int], fraction: float,
              seed: int = 0) -> Tuple[int, ...]:
    """
    Keeps floor(fraction * len(ids)) of the ids, chosen with the seed, in
    their original order.
    """

    if not 0 < fraction <= 1:
        raise EvaluationError(f"Fractions must be in (0, 1], got {fraction}")
    keep = int(np.floor(fraction * len(ids)))
    if keep == 0:
        raise EvaluationError(f"A fraction of {fraction} leaves no training"
                              f" users out of {len(ids)}")
    if keep == len(ids):
        return tuple(ids)
    chosen = np.sort(np.random.default_rng(seed).choice(len(ids), keep,
                                                        replace=False))
    return tuple(ids[i] for i in chosen)


def _one_vs_rest_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    ranks = rankdata(scores)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    rank_sum = ranks[positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def metrics(probs: np.ndarray, true_labels: Sequence[int]) -> EvalReport:
    """
    Accuracy, macro and micro F1 and the macro one-vs-rest AUC of the
    predictions. The AUC skips classes without positives or negatives in the
    test set, and is NaN if no class has both.
    """

    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(true_labels, dtype=np.int64)
    if labels.size == 0:
        raise EvaluationError("Can't compute metrics on an empty test set")
    if probs.ndim != 2 or probs.shape[0] != labels.size:
        raise EvaluationError(f"Got predictions of shape {probs.shape} for"
                              f" {labels.size} labels")

    num_classes = probs.shape[1]
    predicted = np.argmax(probs, axis=1)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)

    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted_count = confusion.sum(axis=0)
    fp = predicted_count - tp
    fn = support - tp
    present = np.flatnonzero(support > 0)

    precision = np.divide(tp, predicted_count, out=np.zeros(num_classes),
                          where=predicted_count > 0)
    recall = np.divide(tp, support, out=np.zeros(num_classes),
                       where=support > 0)
    f1 = 2 * tp[present] / (2 * tp[present] + fp[present] + fn[present])

    accuracy = float(tp.sum() / labels.size)
    micro_f1 = float(tp.sum() / (tp.sum() + 0.5 * (fp.sum() + fn.sum())))

    aucs = []
    for c in present:
        positive = labels == c
        if positive.all():
            continue
        aucs.append(_one_vs_rest_auc(probs[:, c], positive))

    return EvalReport(
        accuracy=accuracy,
        auc=float(np.mean(aucs)) if aucs else float('nan'),
        macro_f1=float(np.mean(f1)),
        micro_f1=micro_f1,
        confusion=confusion,
        precision=precision,
        recall=recall,
        classes_present=tuple(int(c) for c in present))


def aggregate(reports: Sequence[EvalReport]) -> EvalReport:
    if not reports:
        raise EvaluationError("Nothing to aggregate")

    mean = {name: float(np.mean([getattr(r, name) for r in reports]))
            for name in METRICS}
    std = {name: float(np.std([getattr(r, name) for r in reports]))
           for name in METRICS}
    confusion = np.sum([r.confusion for r in reports], axis=0)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted_count = confusion.sum(axis=0)
    num_classes = confusion.shape[0]

    return EvalReport(
        confusion=confusion,
        precision=np.divide(tp, predicted_count, out=np.zeros(num_classes),
                            where=predicted_count > 0),
        recall=np.divide(tp, support, out=np.zeros(num_classes),
                         where=support > 0),
        classes_present=tuple(int(c) for c in np.flatnonzero(support > 0)),
        repetitions=list(reports),
        mean=mean,
        std=std,
        **mean)


def labeled_ids(bundle: DatasetBundle, scheme: Scheme) -> List[int]:
    return [i for i, label in enumerate(bundle.labels(scheme))
            if label is not None]


def run_experiment(data: ExperimentData, feature_source: FeatureSource,
                   spec: HyperedgeSpec, config: TrainConfig,
                   n_reps: int = 5, fraction: float = 1.0,
                   graph: Optional[Hypergraph] = None) -> EvalReport:
    """
    For the seeds 0..n_reps-1: a fresh split, a fresh initialization,
    training and the test metrics. The hypergraph doesn't depend on the seed
    and is built once from `spec`, unless a built `graph` is given, which is
    used as is. With `fraction` below 1 the training split of each
    repetition is subsampled before training.
    """

    if n_reps < 1:
        raise EvaluationError(f"n_reps must be at least 1, got {n_reps}")
    features = data.node_features(feature_source)
    if graph is None:
        semantic = None
        if EdgeFamily.SEM in spec.kinds:
            semantic = features if data.semantic_features is None \
                else data.semantic_features
        graph = assemble(spec, data.bundle, semantic)
    elif graph.num_nodes != data.bundle.num_users:
        raise EvaluationError(f"The hypergraph has {graph.num_nodes} nodes"
                              f" for {data.bundle.num_users} users")
    op = propagation_operator(graph)

    labels = data.bundle.labels(data.scheme)
    labels_array = np.array([-1 if label is None else label
                             for label in labels])
    ids = labeled_ids(data.bundle, data.scheme)
    num_classes = data.scheme.num_classes

    reports = []
    for seed in range(n_reps):
        assignment = split(ids, seed=seed)
        train_ids = subsample(assignment.train, fraction, seed)
        seed_config = dataclasses.replace(config, seed=seed)
        result = train(op, features, labels, train_ids, assignment.val,
                       num_classes, seed_config)
        probs = predict(op, features, result.params, seed_config)
        test = np.array(assignment.test)
        report = metrics(probs[test], labels_array[test])
        logging.info("%s, %s features, repetition %d: accuracy %.4f",
                     spec.name, feature_source.name, seed, report.accuracy)
        reports.append(report)

    return aggregate(reports)


@dataclass
class TableRow:
    name: str
    report: EvalReport

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'report': self.report.to_dict()}


def ablate_hyperedges(data: ExperimentData, feature_source: FeatureSource,
                      base_spec: HyperedgeSpec, config: TrainConfig,
                      n_reps: int = 5) -> List[TableRow]:
    """
    One row per non-empty combination of hyperedge families, named like
    "TOP+SEM". The rest of `base_spec` is kept.
    """

    rows = []
    for kinds in ABLATION_SUBSETS:
        spec = dataclasses.replace(base_spec, kinds=frozenset(kinds))
        rows.append(TableRow(spec.name, run_experiment(
            data, feature_source, spec, config, n_reps)))
    return rows


def label_ratio_sweep(data: ExperimentData, feature_source: FeatureSource,
                      spec: HyperedgeSpec, config: TrainConfig,
                      fractions: Sequence[float] = DEFAULT_FRACTIONS,
                      n_reps: int = 5) -> List[TableRow]:
    """
    One row per fraction of the training split, named by the fraction.
    Validation and test splits are the same as without subsampling.
    """

    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise EvaluationError(f"Fractions must be in (0, 1], got"
                                  f" {fraction}")
    return [TableRow(repr(float(fraction)), run_experiment(
                data, feature_source, spec, config, n_reps, fraction))
            for fraction in fractions]


def table_rows(rows: Sequence[TableRow]) -> List[List[Any]]:
    return [[row.name] + row.report.summary_row() for row in rows]
