import numpy as np

from labelregret import rng


class TestSubstreams:
    def test_same_key_same_stream(self):
        a = rng.substream(42, rng.LABELS, 3).random(16)
        b = rng.substream(42, rng.LABELS, 3).random(16)
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams_differ(self):
        base = rng.substream(42, rng.LABELS, 3).random(16)
        for master, purpose, stream in [(43, rng.LABELS, 3), (42, rng.BOOTSTRAP_ROWS, 3),
                                        (42, rng.LABELS, 4)]:
            other = rng.substream(master, purpose, stream).random(16)
            assert not np.array_equal(base, other)


class TestPointUniforms:
    def test_positional_semantics(self):
        """The value for point i is draw i of the substream, however requested."""
        full = rng.point_uniforms(7, rng.LABELS, 0, np.arange(100))
        subset = rng.point_uniforms(7, rng.LABELS, 0, [5, 17, 99])
        np.testing.assert_array_equal(subset, full[[5, 17, 99]])

    def test_permutation_invariance(self):
        perm = np.random.default_rng(0).permutation(50)
        full = rng.point_uniforms(7, rng.LABELS, 2, np.arange(50))
        shuffled = rng.point_uniforms(7, rng.LABELS, 2, perm)
        np.testing.assert_array_equal(shuffled, full[perm])

    def test_empty(self):
        assert rng.point_uniforms(7, rng.LABELS, 0, []).size == 0


class TestDeriveMaster:
    def test_deterministic_and_distinct(self):
        a = rng.derive_master(9, rng.TRIAL, 0)
        b = rng.derive_master(9, rng.TRIAL, 0)
        c = rng.derive_master(9, rng.TRIAL, 1)
        assert a == b
        assert a != c
        assert 0 <= a < 2 ** 64
