"""Binary range coder: 32-bit registers, carry propagation, byte renormalization.

Probabilities are quantized to 16-bit fixed point in [1, 65535] / 65536, so
neither symbol ever gets zero mass.  The encoder keeps ``low`` with a carry
bit above 32 bits and defers bytes through a cache so carries can ripple
through runs of 0xFF.  The final flush rounds ``low`` up to a 2^16 boundary
and emits only three bytes; the decoder supplies the two implied trailing
zero bytes itself, which keeps the fixed overhead at four bytes total
(leading byte plus flush).

Encoder and decoder renormalize in lockstep, so the number of bytes a
decoder consumes at any point is 5 + (renormalization shifts so far); the
encoder tracks that count to expose truncation-safe prefix lengths.
"""

import numpy as np

from .errors import DecodeError, UsageError

PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


def quantize_prob(p):
    """Quantize P(bit=1) to an integer in [1, 65535] (never degenerate)."""
    q = int(p * PROB_ONE + 0.5)
    return 1 if q < 1 else (PROB_ONE - 1 if q > PROB_ONE - 1 else q)


def quantize_probs(probs):
    """Vectorized :func:`quantize_prob` over an array of probabilities."""
    q = np.rint(np.asarray(probs, dtype=np.float64) * PROB_ONE).astype(np.int64)
    return np.clip(q, 1, PROB_ONE - 1)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1  # counts the leading zero byte
        self.out = bytearray()
        self.shifts = 0
        self.finished = False

    def encode_bit(self, bit, p_one_q):
        """Encode one bit under quantized P(bit=1) = p_one_q / 65536."""
        bound = (self.range * (PROB_ONE - p_one_q)) >> PROB_BITS
        if bit:
            self.low += bound
            self.range -= bound
        else:
            self.range = bound
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self._shift_low()

    def _shift_low(self):
        self.shifts += 1
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            self.out.append((self.cache + carry) & 0xFF)
            for _ in range(self.cache_size - 1):
                self.out.append((0xFF + carry) & 0xFF)
            self.cache = (self.low >> 24) & 0xFF
            self.cache_size = 0
        self.cache_size += 1
        self.low = (self.low << 8) & _MASK32

    def decoder_bytes_needed(self):
        """Bytes a decoder will have consumed after the bits encoded so far."""
        return 5 + self.shifts

    def finish(self):
        """Flush and return the byte stream.  The coder cannot be reused."""
        if self.finished:
            raise UsageError("encoder already finished")
        self.finished = True
        # Round low up to a 2^16 boundary inside [low, low + range); the two
        # zero bytes below the boundary are implied at decode time.
        self.low = (self.low + 0xFFFF) & ~0xFFFF
        for _ in range(3):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    # A valid stream makes the decoder read at most two bytes past its end
    # (the implied zeros the encoder never wrote); more reads mean truncation.
    MAX_IMPLIED_ZEROS = 2

    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.pad_used = 0
        self.range = _MASK32
        self.code = 0
        first = self._next_byte()
        if first != 0:
            raise DecodeError("corrupt stream: nonzero leading byte")
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self):
        if self.pos < len(self.data):
            b = self.data[self.pos]
            self.pos += 1
            return b
        self.pad_used += 1
        if self.pad_used > self.MAX_IMPLIED_ZEROS:
            raise DecodeError("compressed stream truncated")
        return 0

    def decode_bit(self, p_one_q):
        bound = (self.range * (PROB_ONE - p_one_q)) >> PROB_BITS
        if self.code < bound:
            bit = 0
            self.range = bound
        else:
            bit = 1
            self.code -= bound
            self.range -= bound
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK32
            self.range = (self.range << 8) & _MASK32
        return bit


def encode_bits(bits, probs):
    """Encode a bit sequence under per-bit P(bit=1) values; returns bytes.

    ``probs`` may be floats in (0, 1) (quantized here) and must be the same
    length as ``bits``.
    """
    bits = np.asarray(bits)
    if len(bits) != len(probs):
        raise UsageError("bits and probs must have equal length")
    q = quantize_probs(probs)
    enc = RangeEncoder()
    for bit, p in zip(bits.tolist(), q.tolist()):
        enc.encode_bit(bit, p)
    return enc.finish()


def decode_bits(data, probs):
    """Exact inverse of :func:`encode_bits` given the identical prob sequence."""
    q = quantize_probs(probs)
    dec = RangeDecoder(data)
    return np.array([dec.decode_bit(p) for p in q.tolist()], dtype=np.uint8)
