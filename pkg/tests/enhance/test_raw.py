import unittest

import numpy as np

from personify.enhance.raw import raw_feature_matrix
from personify.ingest import bundle_from_records


RECORDS = [
    {'id': 'a', 'followers': 10, 'gender': 'f', 'age': 20, 'about': 'Hi',
     'mbti': 'INTJ', 'groups': ['g1']},
    {'id': 'b', 'followers': 30, 'gender': 'm', 'groups': ['g1', 'g2']},
    {'id': 'c', 'followers': 20, 'age': 40, 'about': 'Hello there'},
]


class RawFeaturesTest(unittest.TestCase):
    def test_columns(self):
        matrix = raw_feature_matrix(bundle_from_records(RECORDS))
        followers = (np.array([10, 30, 20]) - 20) / np.sqrt(200 / 3)
        expected = np.array([
            [followers[0], -1.0, 1, 0, 1, 0],
            [followers[1], 0.0, 0, 1, 1, 1],
            [followers[2], 1.0, 0, 0, 0, 0],
        ])
        np.testing.assert_allclose(matrix, expected, atol=1e-12)

    def test_labels_ignored(self):
        unlabeled = [dict(record) for record in RECORDS]
        unlabeled[0].pop('mbti')
        np.testing.assert_array_equal(
            raw_feature_matrix(bundle_from_records(RECORDS)),
            raw_feature_matrix(bundle_from_records(unlabeled)))

    def test_catalogue_groups(self):
        bundle = bundle_from_records(RECORDS, catalogue=['g0'])
        matrix = raw_feature_matrix(bundle)
        self.assertEqual(matrix.shape, (3, 7))
        np.testing.assert_array_equal(matrix[:, 4], np.zeros(3))


if __name__ == '__main__':
    unittest.main()
