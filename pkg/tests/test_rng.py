"""Tests for the counter-based replicate streams."""

import numpy as np
import pytest

from mosaic_panel.rng import child_seeds, normalize_seed, replicate_stream, sign_bits


class TestSignBits:
    def test_prefix_stable(self):
        full = sign_bits(11, 50, 13)
        np.testing.assert_array_equal(sign_bits(11, 20, 13), full[:20])

    def test_order_independent(self):
        full = sign_bits(11, 50, 13)
        np.testing.assert_array_equal(sign_bits(11, 10, 13, start=30), full[30:40])

    def test_matches_replicate_stream(self):
        row = sign_bits(5, 4, 70)[3]
        words = replicate_stream(5, 3).bit_generator.random_raw(2)
        bits = np.unpackbits(np.asarray(words, dtype=np.uint64).view(np.uint8), bitorder="little")
        np.testing.assert_array_equal(row, bits[:70].astype(bool))

    def test_seeds_differ(self):
        assert not np.array_equal(sign_bits(1, 20, 30), sign_bits(2, 20, 30))

    def test_fair_coin(self):
        bits = sign_bits(3, 4000, 50)
        assert abs(bits.mean() - 0.5) < 4 * 0.5 / np.sqrt(bits.size)


class TestSeeds:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            normalize_seed(-1)

    def test_none_draws_entropy(self):
        assert normalize_seed(None) != normalize_seed(None)

    def test_children_distinct_and_stable(self):
        a = child_seeds(9, 5)
        assert len(set(a.tolist())) == 5
        np.testing.assert_array_equal(a, child_seeds(9, 5))
