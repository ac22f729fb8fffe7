"""Range coder: losslessness, size bounds, truncation detection."""

import numpy as np
import pytest

from rnic.coder import (
    PROB_ONE,
    RangeDecoder,
    RangeEncoder,
    decode_bits,
    encode_bits,
    quantize_prob,
    quantize_probs,
)
from rnic.errors import DecodeError, UsageError


def quantized_cross_entropy_bits(bits, probs):
    """Ideal code length in bits under the quantized model (oracle)."""
    q = quantize_probs(probs).astype(np.float64) / PROB_ONE
    bits = np.asarray(bits, dtype=np.float64)
    return float(np.sum(-bits * np.log2(q) - (1 - bits) * np.log2(1 - q)))


class TestQuantization:
    def test_never_degenerate(self):
        assert quantize_prob(0.0) == 1
        assert quantize_prob(1.0) == PROB_ONE - 1
        assert quantize_prob(1e-12) == 1

    def test_midpoint(self):
        assert quantize_prob(0.5) == PROB_ONE // 2

    def test_vectorized_matches_scalar(self, rng):
        ps = rng.random(1000)
        qv = quantize_probs(ps)
        for p, q in zip(ps, qv):
            assert quantize_prob(p) == q


class TestRoundTrip:
    def test_empty_sequence_terminator(self):
        data = encode_bits([], [])
        assert len(data) <= 4
        assert decode_bits(data, []).size == 0

    def test_single_bit_both_values(self):
        for bit in (0, 1):
            data = encode_bits([bit], [0.5])
            assert decode_bits(data, [0.5]).tolist() == [bit]

    def test_many_random_sequences(self):
        gen = np.random.default_rng(42)
        for trial in range(500):
            n = int(gen.integers(1, 200))
            probs = gen.random(n) * 0.998 + 0.001
            bits = (gen.random(n) < probs).astype(np.uint8)
            data = encode_bits(bits, probs)
            got = decode_bits(data, probs)
            assert np.array_equal(got, bits), f"trial {trial}"

    def test_adversarial_alternating_probs(self):
        gen = np.random.default_rng(3)
        n = 4096
        probs = np.where(np.arange(n) % 2 == 0, 0.001, 0.999)
        bits = gen.integers(0, 2, size=n).astype(np.uint8)
        data = encode_bits(bits, probs)
        assert np.array_equal(decode_bits(data, probs), bits)

    def test_mismatched_bits_vs_model(self):
        # bits drawn against the model still round-trip (losslessness is
        # unconditional, only the size suffers)
        gen = np.random.default_rng(9)
        n = 2048
        probs = np.full(n, 0.99)
        bits = (gen.random(n) < 0.5).astype(np.uint8)
        data = encode_bits(bits, probs)
        assert np.array_equal(decode_bits(data, probs), bits)


class TestSizeBounds:
    def test_incompressible_at_half(self):
        gen = np.random.default_rng(5)
        bits = gen.integers(0, 2, size=1024).astype(np.uint8)
        data = encode_bits(bits, np.full(1024, 0.5))
        assert abs(len(data) - 128) <= 4

    def test_skewed_all_zeros(self):
        n = 4096
        bits = np.zeros(n, dtype=np.uint8)
        probs = np.full(n, 0.01)
        data = encode_bits(bits, probs)
        ideal = quantized_cross_entropy_bits(bits, probs)  # ~59.4 bits
        assert ideal / 8 < 8.0
        assert len(data) <= ideal * 1.01 / 8 + 4

    def test_general_bound_random_models(self):
        gen = np.random.default_rng(17)
        for _ in range(60):
            n = int(gen.integers(16, 3000))
            probs = np.clip(gen.beta(0.4, 0.4, size=n), 1e-4, 1 - 1e-4)
            bits = (gen.random(n) < probs).astype(np.uint8)
            data = encode_bits(bits, probs)
            ideal = quantized_cross_entropy_bits(bits, probs)
            assert len(data) * 8 <= ideal * 1.01 + 32

    def test_half_prob_within_half_percent(self):
        gen = np.random.default_rng(23)
        n = 65536
        bits = gen.integers(0, 2, size=n).astype(np.uint8)
        data = encode_bits(bits, np.full(n, 0.5))
        assert len(data) * 8 <= n * 1.005 + 32


class TestTruncation:
    def test_truncated_stream_raises(self):
        gen = np.random.default_rng(11)
        n = 512
        probs = gen.random(n) * 0.9 + 0.05
        bits = gen.integers(0, 2, size=n).astype(np.uint8)
        data = encode_bits(bits, probs)
        with pytest.raises(DecodeError):
            decode_bits(data[: len(data) // 2], probs)

    def test_finish_twice_rejected(self):
        enc = RangeEncoder()
        enc.finish()
        with pytest.raises(UsageError):
            enc.finish()

    def test_length_mismatch_rejected(self):
        with pytest.raises(UsageError):
            encode_bits([0, 1], [0.5])

    def test_decoder_prefix_bookkeeping(self):
        # decoding j bits must never read beyond the encoder's declared prefix
        gen = np.random.default_rng(13)
        n = 400
        probs = gen.random(n) * 0.998 + 0.001
        bits = gen.integers(0, 2, size=n).astype(np.uint8)
        q = quantize_probs(probs)
        enc = RangeEncoder()
        marks = []
        for i, (b, p) in enumerate(zip(bits.tolist(), q.tolist())):
            enc.encode_bit(b, p)
            if i % 50 == 49:
                marks.append((i + 1, enc.decoder_bytes_needed()))
        data = enc.finish()
        for upto, needed in marks:
            prefix = data[: min(needed, len(data))]
            dec = RangeDecoder(prefix)
            got = [dec.decode_bit(p) for p in q[:upto].tolist()]
            assert np.array_equal(got, bits[:upto])
