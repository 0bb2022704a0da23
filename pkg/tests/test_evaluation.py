import unittest
from itertools import product

import numpy as np

from personify import PersonifyError
from personify.envgen import HyperedgeSpec, assemble
from personify.enhance import build_prompt, enhance_profiles
from personify.enhance.embed import EmbedderSpec, embed
from personify.enhance.mock import MockClient
from personify.enhance.raw import raw_feature_matrix
from personify.evaluation import (ABLATION_SUBSETS, EvaluationError,
                                  ExperimentData, FeatureSource, aggregate,
                                  ablate_hyperedges, label_ratio_sweep,
                                  labeled_ids, metrics, run_experiment,
                                  split, subsample, table_rows)
from personify.ingest import strip_labels
from personify.model import EdgeFamily, Hyperedge, Hypergraph, Scheme
from personify.hgnn import TrainConfig
from personify.synthetic import planted_dataset


def pairwise_auc(scores, positive):
    pos = scores[positive]
    neg = scores[~positive]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0
               for p, n in product(pos, neg))
    return wins / (len(pos) * len(neg))


class SplitTest(unittest.TestCase):
    def test_sizes(self):
        for n, expected in ((10, (8, 1, 1)), (12, (9, 1, 2)), (3, (1, 1, 1)),
                            (100, (80, 10, 10)), (7, (5, 1, 1))):
            assignment = split(list(range(n)))
            sizes = (len(assignment.train), len(assignment.val),
                     len(assignment.test))
            self.assertEqual(sizes, expected, n)

    def test_partition(self):
        ids = [5, 9, 2, 40, 41, 7, 13, 11, 3, 30, 31]
        assignment = split(ids, seed=4)
        joined = assignment.train + assignment.val + assignment.test
        self.assertEqual(sorted(joined), sorted(ids))

    def test_deterministic(self):
        ids = list(range(50))
        self.assertEqual(split(ids, seed=1), split(ids, seed=1))
        self.assertNotEqual(split(ids, seed=1), split(ids, seed=2))

    def test_errors(self):
        with self.assertRaises(EvaluationError):
            split([1, 2])
        with self.assertRaises(EvaluationError):
            split([1, 1, 2])
        with self.assertRaises(EvaluationError):
            split([1, 2, 3], ratios=(0.8, -0.1, 0.3))


class SubsampleTest(unittest.TestCase):
    def test_keeps_order(self):
        ids = tuple(range(100, 120))
        kept = subsample(ids, 0.25, seed=3)
        self.assertEqual(len(kept), 5)
        self.assertEqual(list(kept), sorted(kept))
        self.assertTrue(set(kept) <= set(ids))
        self.assertEqual(subsample(ids, 1.0), ids)

    def test_errors(self):
        for fraction in (0.0, -0.5, 1.5):
            with self.assertRaises(EvaluationError):
                subsample((1, 2, 3), fraction)
        with self.assertRaises(EvaluationError):
            subsample((1, 2, 3), 0.1)


class MetricsTest(unittest.TestCase):
    def test_example(self):
        probs = np.array([[0.9, 0.1], [0.4, 0.6], [0.3, 0.7], [0.2, 0.8]])
        report = metrics(probs, [0, 0, 1, 1])
        self.assertAlmostEqual(report.accuracy, 0.75)
        self.assertAlmostEqual(report.micro_f1, 0.75)
        self.assertAlmostEqual(report.macro_f1, (2 / 3 + 0.8) / 2)
        self.assertAlmostEqual(report.auc, 1.0)
        np.testing.assert_array_equal(report.confusion, [[1, 1], [0, 2]])
        np.testing.assert_allclose(report.precision, [1.0, 2 / 3])
        np.testing.assert_allclose(report.recall, [0.5, 1.0])

    def test_three_scores(self):
        probs = np.array([[0.9, 0.1], [0.4, 0.6], [0.2, 0.8]])
        report = metrics(probs, [0, 1, 1])
        self.assertEqual(report.accuracy, 1.0)
        self.assertEqual(report.auc, 1.0)
        self.assertEqual(report.macro_f1, 1.0)

    def test_uninformative(self):
        report = metrics(np.full((4, 2), 0.5), [0, 1, 0, 1])
        self.assertAlmostEqual(report.auc, 0.5)

    def test_row_scaling(self):
        rng = np.random.default_rng(1)
        probs = rng.dirichlet(np.ones(3), size=12)
        labels = rng.integers(0, 3, size=12)
        scaled = probs * rng.uniform(0.5, 4.0, size=(12, 1))
        scaled /= scaled.sum(axis=1, keepdims=True)
        first, second = metrics(probs, labels), metrics(scaled, labels)
        self.assertEqual(first.accuracy, second.accuracy)
        self.assertEqual(first.macro_f1, second.macro_f1)
        np.testing.assert_array_equal(first.confusion, second.confusion)

    def test_absent_classes(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.2, 0.7],
                          [0.6, 0.3, 0.1]])
        report = metrics(probs, [0, 0, 2])
        self.assertEqual(report.classes_present, (0, 2))
        # Class 0: precision 1/2, recall 1/2. Class 2: nothing right.
        self.assertAlmostEqual(report.macro_f1, 0.25)

    def test_single_class(self):
        report = metrics(np.array([[0.6, 0.4], [0.7, 0.3]]), [0, 0])
        self.assertTrue(np.isnan(report.auc))
        self.assertEqual(report.accuracy, 1.0)

    def test_against_pairwise_auc(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n, p = int(rng.integers(5, 30)), int(rng.integers(2, 5))
            # Rounded scores so that ties happen.
            probs = np.round(rng.dirichlet(np.ones(p), size=n), 1)
            labels = rng.integers(0, p, size=n)
            report = metrics(probs, labels)
            aucs = [pairwise_auc(probs[:, c], labels == c) for c in range(p)
                    if 0 < np.sum(labels == c) < n]
            if aucs:
                self.assertAlmostEqual(report.auc, np.mean(aucs), places=12)
            self.assertAlmostEqual(report.micro_f1, report.accuracy,
                                   places=12)

    def test_errors(self):
        with self.assertRaises(EvaluationError):
            metrics(np.zeros((0, 2)), [])
        with self.assertRaises(EvaluationError):
            metrics(np.ones((3, 2)) / 2, [0, 1])

    def test_aggregate(self):
        good = metrics(np.array([[0.9, 0.1], [0.1, 0.9]]), [0, 1])
        half = metrics(np.array([[0.9, 0.1], [0.9, 0.1]]), [0, 1])
        report = aggregate([good, half])
        self.assertAlmostEqual(report.accuracy, 0.75)
        self.assertAlmostEqual(report.std['accuracy'], 0.25)
        np.testing.assert_array_equal(report.confusion, [[2, 0], [1, 1]])
        self.assertEqual(len(report.to_dict()['repetitions']), 2)
        self.assertEqual(len(report.summary_row()), 8)


class PlantedExperimentTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.bundle = planted_dataset(seed=0).bundle()
        rng = np.random.default_rng(0)
        cls.data = ExperimentData(
            bundle=cls.bundle, scheme=Scheme.MBTI16,
            features={
                FeatureSource.RAW: raw_feature_matrix(cls.bundle),
                FeatureSource.ENHANCED: rng.normal(size=(200, 32))
            })
        cls.config = TrainConfig(learning_rate=0.01, max_epochs=150,
                                 hidden_dim=32, patience=50)
        cls.forum = HyperedgeSpec(kinds=frozenset([EdgeFamily.FOR]))

    def test_labeled_ids(self):
        self.assertEqual(labeled_ids(self.bundle, Scheme.MBTI16),
                         list(range(200)))

    def test_forum_groups(self):
        # The offline pipeline: mock narratives of the unlabeled records,
        # embedded with the hashing embedder.
        prompts = [build_prompt(user) for user in
                   strip_labels(self.bundle).users]
        profiles = enhance_profiles(MockClient(), prompts)
        features = embed(EmbedderSpec(), [p.narrative for p in profiles])
        self.assertEqual(features.shape, (200, 384))

        data = ExperimentData(bundle=self.bundle, scheme=Scheme.MBTI16,
                              features={FeatureSource.ENHANCED: features})
        report = run_experiment(data, FeatureSource.ENHANCED, self.forum,
                                TrainConfig(), n_reps=5)
        self.assertEqual(len(report.repetitions), 5)
        self.assertGreaterEqual(report.accuracy, 0.9)

    def test_built_graph(self):
        config = TrainConfig(max_epochs=5, hidden_dim=8)
        graph = assemble(self.forum, self.bundle)
        given = run_experiment(self.data, FeatureSource.RAW, self.forum,
                               config, n_reps=1, graph=graph)
        built = run_experiment(self.data, FeatureSource.RAW, self.forum,
                               config, n_reps=1)
        self.assertEqual(given.to_dict(), built.to_dict())

        smaller = Hypergraph(199, (Hyperedge(0, EdgeFamily.FOR, (0, 1)),),
                             np.ones(199), np.ones(1))
        with self.assertRaises(EvaluationError):
            run_experiment(self.data, FeatureSource.RAW, self.forum, config,
                           n_reps=1, graph=smaller)

    def test_missing_features(self):
        data = ExperimentData(bundle=self.bundle, scheme=Scheme.MBTI16)
        with self.assertRaises(EvaluationError):
            run_experiment(data, FeatureSource.ENHANCED, HyperedgeSpec(),
                           self.config)

    def test_invalid_features(self):
        data = ExperimentData(bundle=self.bundle, scheme=Scheme.MBTI16,
                              features={FeatureSource.RAW: np.ones(200)})
        with self.assertRaises(PersonifyError):
            run_experiment(data, FeatureSource.RAW, self.forum, self.config)

    def test_ablation(self):
        rows = ablate_hyperedges(self.data, FeatureSource.ENHANCED,
                                 HyperedgeSpec(), TrainConfig(), n_reps=5)
        names = [row.name for row in rows]
        self.assertEqual(names, ['+'.join(kind.name for kind in kinds)
                                 for kinds in ABLATION_SUBSETS])
        accuracy = {row.name: row.report.accuracy for row in rows}
        # The features are noise, the groups are what tells the classes
        # apart, and semantic neighbours of noise don't help.
        for name in ('FOR', 'TOP+FOR', 'SEM+FOR', 'TOP+SEM+FOR'):
            self.assertGreaterEqual(accuracy[name] - accuracy['SEM'], 0.3,
                                    name)
        self.assertEqual(len(table_rows(rows)[0]), 9)

    def test_label_ratio(self):
        spec = HyperedgeSpec(kinds=frozenset([EdgeFamily.TOP]))
        rows = label_ratio_sweep(self.data, FeatureSource.ENHANCED, spec,
                                 TrainConfig(), fractions=(0.1, 1.0),
                                 n_reps=5)
        accuracy = {row.name: row.report.accuracy for row in rows}
        self.assertEqual(list(accuracy), ['0.1', '1.0'])
        self.assertGreaterEqual(accuracy['1.0'], accuracy['0.1'])

    def test_sweep(self):
        config = TrainConfig(learning_rate=0.01, max_epochs=30,
                             hidden_dim=8)
        rows = label_ratio_sweep(self.data, FeatureSource.RAW, self.forum,
                                 config, fractions=(0.5, 1.0), n_reps=1)
        self.assertEqual([row.name for row in rows], ['0.5', '1.0'])
        single = run_experiment(self.data, FeatureSource.RAW, self.forum,
                                config, n_reps=1)
        self.assertEqual(rows[1].report.to_dict(), single.to_dict())
        with self.assertRaises(EvaluationError):
            label_ratio_sweep(self.data, FeatureSource.RAW, self.forum,
                              config, fractions=(0.0,), n_reps=1)


if __name__ == '__main__':
    unittest.main()
