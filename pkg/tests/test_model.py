import unittest

import numpy as np

from personify import PersonifyError
from personify.model import (EdgeFamily, Hyperedge, Hypergraph,
                             HypergraphError, LabelParseError, MbtiCode,
                             PersonalityLabel, Scheme, UserRecord,
                             as_feature_matrix, class_name, format_mbti,
                             label_of, mbti_from_index, one_hot,
                             parse_enneagram, parse_mbti)


def graph(num_nodes, *members, kind=EdgeFamily.FOR):
    edges = tuple(Hyperedge(i, kind, m) for i, m in enumerate(members))
    return Hypergraph(num_nodes, edges, np.ones(num_nodes),
                      np.ones(len(edges)))


class MbtiTest(unittest.TestCase):
    def test_parse(self):
        self.assertEqual(parse_mbti("INFP").dichotomies, (1, 1, 1, 1))
        self.assertEqual(parse_mbti("INFP").class_index, 15)
        self.assertEqual(parse_mbti("estj").dichotomies, (0, 0, 0, 0))
        self.assertEqual(parse_mbti("estj").class_index, 0)
        self.assertEqual(parse_mbti(" EnTp ").class_index, 5)

    def test_parse_errors(self):
        with self.assertRaises(LabelParseError) as ctx:
            parse_mbti("INXP")
        self.assertEqual(ctx.exception.position, 3)
        for code in ("INF", "INFPS", ""):
            with self.assertRaises(LabelParseError):
                parse_mbti(code)

    def test_all_codes(self):
        """
        Formatting and parsing are inverse over the 16 types, and the class
        index enumerates them.
        """

        seen = set()
        for index in range(16):
            code = mbti_from_index(index)
            self.assertEqual(code.class_index, index)
            self.assertEqual(parse_mbti(format_mbti(code)), code)
            seen.add(str(code))
        self.assertEqual(len(seen), 16)
        with self.assertRaises(LabelParseError):
            mbti_from_index(16)
        with self.assertRaises(LabelParseError):
            MbtiCode((0, 1, 2, 0))


class EnneagramTest(unittest.TestCase):
    def test_parse(self):
        self.assertEqual(parse_enneagram("4"), 4)
        self.assertEqual(parse_enneagram("4w5"), 4)
        self.assertEqual(parse_enneagram("9W1"), 9)
        self.assertEqual(parse_enneagram(" 1 w 2"), 1)

    def test_parse_errors(self):
        for raw in ("0", "10", "w5", "", "type 4"):
            with self.assertRaises(LabelParseError):
                parse_enneagram(raw)


class LabelTest(unittest.TestCase):
    def test_labels(self):
        user = UserRecord(0, 'rick', {'gender': 'Male'}, 10, ('a',),
                          parse_mbti('INTJ'), 5)
        self.assertEqual(label_of(user, Scheme.MBTI16),
                         PersonalityLabel(Scheme.MBTI16, 12))
        self.assertEqual(label_of(user, Scheme.ENNEAGRAM9).class_index, 4)
        self.assertIsNone(label_of(UserRecord(1, 'x'), Scheme.MBTI16))
        self.assertIsNone(label_of(UserRecord(1, 'x'), Scheme.ENNEAGRAM9))

    def test_class_name(self):
        self.assertEqual(class_name(Scheme.MBTI16, 15), 'INFP')
        self.assertEqual(class_name(Scheme.ENNEAGRAM9, 0), '1')

    def test_one_hot(self):
        vector = one_hot(PersonalityLabel(Scheme.ENNEAGRAM9, 3))
        self.assertEqual(vector.shape, (9,))
        self.assertEqual(vector.sum(), 1.0)
        self.assertEqual(vector[3], 1.0)
        with self.assertRaises(LabelParseError):
            PersonalityLabel(Scheme.ENNEAGRAM9, 9)

    def test_scheme(self):
        self.assertEqual(Scheme.from_name('mbti'), Scheme.MBTI16)
        self.assertEqual(Scheme.from_name('ENNEAGRAM9'), Scheme.ENNEAGRAM9)
        self.assertEqual(Scheme.MBTI16.num_classes, 16)
        with self.assertRaises(PersonifyError):
            Scheme.from_name('big5')

    def test_record_is_immutable(self):
        attributes = {'gender': 'Female'}
        user = UserRecord(0, 'x', attributes)
        attributes['gender'] = 'Male'
        self.assertEqual(user.attributes['gender'], 'Female')
        with self.assertRaises(TypeError):
            user.attributes['gender'] = 'Male'
        with self.assertRaises(LabelParseError):
            UserRecord(0, 'x', enneagram=10)


class HypergraphTest(unittest.TestCase):
    def test_incidence(self):
        g = graph(3, (0, 1), (1, 2))
        self.assertEqual(g.incidence().toarray().tolist(),
                         [[1, 0], [1, 1], [0, 1]])
        self.assertEqual(g.num_edges, 2)
        self.assertEqual(g.family_sizes()[EdgeFamily.FOR], 2)

    def test_members_are_normalized(self):
        self.assertEqual(Hyperedge(0, EdgeFamily.TOP, (3, 1, 3)).members,
                         (1, 3))

    def test_invariants(self):
        with self.assertRaises(HypergraphError):
            graph(2, (0, 2))
        with self.assertRaises(HypergraphError):
            graph(2, ())
        with self.assertRaises(HypergraphError):
            graph(3, (0, 1), (1, 0))
        with self.assertRaises(HypergraphError):
            Hypergraph(2, (Hyperedge(0, EdgeFamily.TOP, (0, 1)),),
                       np.ones(2), np.zeros(1))
        # The same members in different families are fine
        Hypergraph(2, (Hyperedge(0, EdgeFamily.TOP, (0, 1)),
                       Hyperedge(1, EdgeFamily.FOR, (0, 1))),
                   np.ones(2), np.ones(2))

    def test_subgraph(self):
        g = graph(5, (0, 1, 2), (3, 4), (2, 3))
        sub = g.subgraph([3, 2])
        self.assertEqual(sub.num_nodes, 2)
        self.assertEqual([e.members for e in sub.hyperedges],
                         [(1,), (0,), (0, 1)])

    def test_feature_matrix(self):
        self.assertEqual(as_feature_matrix([[1, 2], [3, 4]]).dtype,
                         np.float64)
        with self.assertRaises(PersonifyError):
            as_feature_matrix([1, 2])
        with self.assertRaises(PersonifyError):
            as_feature_matrix([[np.nan]])


if __name__ == '__main__':
    unittest.main()
