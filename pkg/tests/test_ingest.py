import os
import json
import shutil
import tempfile
import unittest

from personify.ingest import (EdgeKind, IngestError, bundle_from_records,
                              load_dataset, strip_labels, validate)
from personify.model import Scheme


USERS = [
    {'id': 'a', 'username': 'alice', 'gender': 'Female', 'followers': 12,
     'groups': ['chess', 'tea'], 'mbti': 'INFP', 'enneagram': '4w5'},
    {'id': 'b', 'username': 'bob', 'location': 'Oslo', 'groups': ['chess'],
     'mbti': 'ESTJ'},
    {'id': 'c', 'username': 'carol', 'mbti': 'XXXX', 'favourite': 'tea'},
    {'id': 'd', 'username': 'dan'}
]

EDGES = "src,dst,kind\na,b,follow\nb,c,QUOTE\na,z,MENTION\nc,c,FOLLOW\n"


class IngestTest(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.users_path = os.path.join(self.tmpdir, 'users.jsonl')
        self.edges_path = os.path.join(self.tmpdir, 'edges.csv')
        self.groups_path = os.path.join(self.tmpdir, 'groups.txt')
        self.write_users(USERS)
        with open(self.edges_path, 'w') as f:
            f.write(EDGES)
        with open(self.groups_path, 'w') as f:
            f.write("chess\nknitting\n")

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def write_users(self, users):
        with open(self.users_path, 'w') as f:
            for user in users:
                f.write(json.dumps(user) + '\n')

    def load(self):
        with self.assertLogs(level='WARNING'):
            return load_dataset(self.users_path, self.edges_path,
                                self.groups_path)

    def test_load(self):
        bundle = self.load()
        self.assertEqual(bundle.num_users, 4)
        self.assertEqual(dict(bundle.id_map), {'a': 0, 'b': 1, 'c': 2,
                                               'd': 3})
        self.assertEqual([(e.src, e.dst, e.kind) for e in bundle.edges],
                         [(0, 1, EdgeKind.FOLLOW), (1, 2, EdgeKind.QUOTE)])
        self.assertEqual(bundle.users[0].follower_count, 12)
        self.assertEqual(bundle.users[0].enneagram, 4)
        self.assertEqual(bundle.users[2].attributes['favourite'], 'tea')
        self.assertIsNone(bundle.users[1].attributes['gender'])
        self.assertEqual(bundle.labels(Scheme.MBTI16), [15, 0, None, None])
        self.assertEqual(bundle.labels(Scheme.ENNEAGRAM9),
                         [3, None, None, None])

    def test_warnings(self):
        """
        The dangling edge, the self-loop and the invalid MBTI label are
        dropped with a warning instead of stopping the load.
        """

        bundle = self.load()
        self.assertEqual(len(bundle.warnings), 3)
        self.assertTrue(any("'X'" in w for w in bundle.warnings))
        self.assertTrue(any('self-loop' in w for w in bundle.warnings))
        self.assertTrue(any('unknown user z' in w for w in bundle.warnings))

    def test_group_index(self):
        """
        Every member of a group lists it, and every listed group has the
        user as a member. Catalogued groups without members are kept.
        """

        bundle = self.load()
        self.assertEqual(list(bundle.group_index),
                         ['chess', 'knitting', 'tea'])
        self.assertEqual(bundle.group_index['chess'], (0, 1))
        self.assertEqual(bundle.group_index['knitting'], ())
        for name, members in bundle.group_index.items():
            for member in members:
                self.assertIn(name, bundle.users[member].group_names)
        for user in bundle.users:
            for name in user.group_names:
                self.assertIn(user.user_id, bundle.group_index[name])

    def test_duplicate_id(self):
        self.write_users(USERS + [{'id': 'a'}])
        with self.assertRaises(IngestError) as ctx:
            load_dataset(self.users_path)
        self.assertIn('line 5', str(ctx.exception))

    def test_malformed(self):
        with open(self.users_path, 'w') as f:
            f.write('{"id": "a"}\n{"id": \n')
        with self.assertRaises(IngestError) as ctx:
            load_dataset(self.users_path)
        self.assertIn('line 2', str(ctx.exception))

        self.write_users([{'username': 'no id'}])
        with self.assertRaises(IngestError):
            load_dataset(self.users_path)

        self.write_users([{'id': 'a', 'followers': -1}])
        with self.assertRaises(IngestError):
            load_dataset(self.users_path)

    def test_follower_counts(self):
        self.write_users([{'id': 'a', 'followers': 12.0},
                          {'id': 'b', 'followers': '7'},
                          {'id': 'c'}])
        bundle = load_dataset(self.users_path)
        self.assertEqual([user.follower_count for user in bundle.users],
                         [12, 7, 0])

        self.write_users([{'id': 'a'}, {'id': 'b', 'followers': 12.7}])
        with self.assertRaises(IngestError) as ctx:
            load_dataset(self.users_path)
        self.assertIn('Line 2', str(ctx.exception))
        self.assertIn('12.7', str(ctx.exception))

    def test_bad_edges_header(self):
        with open(self.edges_path, 'w') as f:
            f.write("from,to\na,b\n")
        with self.assertRaises(IngestError):
            load_dataset(self.users_path, self.edges_path)

    def test_deterministic(self):
        first = self.load()
        second = self.load()
        self.assertEqual(first.users, second.users)
        self.assertEqual(first.edges, second.edges)

    def test_strip_labels(self):
        bundle = bundle_from_records([
            {'id': 1, 'mbti': 'INTP', 'MBTI ': 'INTP', 'gender': 'Male'}])
        stripped = strip_labels(bundle)
        user = stripped.users[0]
        self.assertIsNone(user.mbti)
        self.assertIsNone(user.enneagram)
        self.assertNotIn('MBTI ', user.attributes)
        self.assertEqual(user.attributes['gender'], 'Male')
        # The original bundle isn't modified
        self.assertIsNotNone(bundle.users[0].mbti)
        self.assertIn('MBTI ', bundle.users[0].attributes)

    def test_validate(self):
        report = validate(self.load())
        self.assertEqual(report.num_users, 4)
        self.assertEqual(report.num_edges, 2)
        self.assertEqual(report.isolated_nodes, [3])
        self.assertEqual(report.empty_groups, ['knitting'])
        self.assertEqual(report.missing_attributes['gender'], 3)
        self.assertAlmostEqual(report.label_coverage['MBTI16'], 0.5)
        self.assertAlmostEqual(report.label_coverage['ENNEAGRAM9'], 0.25)
        self.assertEqual(len(report.to_dict()['warnings']), 3)


if __name__ == '__main__':
    unittest.main()
