"""
Unit tests for the categorical encoding tables.
"""

import unittest
import sys
import os

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from models.encodings import (CATEGORICAL_FEATURES, Phase, category_values, decode_categorical,
                              encode_categorical, sort_by_id)
from models.errors import UnknownCategory


class TestEncodeCategorical(unittest.TestCase):

    def test_fixed_ids(self):
        """Test ids of a few known values."""
        self.assertEqual(encode_categorical('phases', 'NA'), 0)
        self.assertEqual(encode_categorical('phases', 'PHASE2'), 3)
        self.assertEqual(encode_categorical('masking', 'QUADRUPLE'), 4)
        self.assertEqual(encode_categorical('primaryPurpose', 'OTHER'), 9)
        self.assertEqual(encode_categorical('interventionTypes', 'DIAGNOSTIC_TEST'), 9)
        self.assertEqual(encode_categorical('armGroupTypes', 'NO_INTERVENTION'), 4)

    def test_enum_member_accepted(self):
        """Test encoding an enum member directly."""
        self.assertEqual(encode_categorical('phases', Phase.PHASE4), 5)

    def test_multi_label_encodes_to_id_set(self):
        """Test encoding several phases at once."""
        self.assertEqual(encode_categorical('phases', ['PHASE1', 'PHASE2']), frozenset({2, 3}))

    def test_unknown_value(self):
        """Test that an unknown value carries the raw text."""
        with self.assertRaises(UnknownCategory) as ctx:
            encode_categorical('phases', 'PHASE5')
        self.assertEqual(ctx.exception.raw, 'PHASE5')

    def test_unknown_feature(self):
        """Test with a feature that has no vocabulary."""
        with self.assertRaises(UnknownCategory):
            encode_categorical('studyColor', 'RED')

    def test_decode_inverts_encode(self):
        """Test decoding every known value."""
        for feature in CATEGORICAL_FEATURES:
            for value in category_values(feature):
                self.assertEqual(decode_categorical(feature, encode_categorical(feature, value)), value)

    def test_decode_out_of_range(self):
        """Test decoding an id past the vocabulary."""
        with self.assertRaises(UnknownCategory):
            decode_categorical('sex', 3)

    def test_ids_are_dense(self):
        """Ids run from zero without gaps."""
        for feature in CATEGORICAL_FEATURES:
            ids = sorted(encode_categorical(feature, value) for value in category_values(feature))
            self.assertEqual(ids, list(range(len(ids))))

    def test_sort_by_id_deduplicates(self):
        """Test ordering and deduplication of multi-label values."""
        self.assertEqual(sort_by_id('phases', ['PHASE3', 'PHASE1', 'PHASE3']), ('PHASE1', 'PHASE3'))


if __name__ == '__main__':
    unittest.main()
