"""按 key 派生随机流的测试。"""
import numpy as np

from app.diffusion.rng import RENOISE, TERMINAL, NoiseStreams


class TestNoiseStreams:
    def test_same_key_same_noise(self):
        a = NoiseStreams(3).normal(RENOISE, 4, (2, 3))
        b = NoiseStreams(3).normal(RENOISE, 4, (2, 3))
        np.testing.assert_array_equal(a, b)

    def test_order_independent(self):
        first = NoiseStreams(3)
        x1 = first.normal(TERMINAL, 1, (5,))
        y1 = first.normal(RENOISE, 2, (5,))
        second = NoiseStreams(3)
        y2 = second.normal(RENOISE, 2, (5,))
        x2 = second.normal(TERMINAL, 1, (5,))
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(y1, y2)

    def test_keys_are_distinct(self):
        streams = NoiseStreams(3)
        base = streams.normal(RENOISE, 2, (8,))
        assert not np.array_equal(base, streams.normal(RENOISE, 3, (8,)))
        assert not np.array_equal(base, streams.normal(TERMINAL, 2, (8,)))
        assert not np.array_equal(base, NoiseStreams(4).normal(RENOISE, 2, (8,)))

    def test_ledger_digests(self):
        streams = NoiseStreams(0)
        streams.normal(RENOISE, 2, (3,))
        streams.normal(RENOISE, 2, (3,))
        digests = streams.digests(RENOISE, 2)
        assert len(digests) == 2
        assert digests[0] == digests[1]
        assert streams.digests(TERMINAL, 1) == []
