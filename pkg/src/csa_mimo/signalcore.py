"""Symbol-level primitives: orthogonal pilots, square QAM, genie decoding.

Pilot sequences are Sylvester-Hadamard rows, so inner products between
distinct pilots are exactly zero in integer arithmetic.  Payloads use
Gray-labelled square QAM normalized to unit mean symbol energy.  Channel
decoding is modelled by a genie bounded-distance rule: the simulator knows
each user's true codeword, so a decode attempt succeeds exactly when the
hard-demapped bits lie within the code's correction radius, and a perfect
CRC rules out false accepts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PilotBook:
    """Orthogonal pilot sequences, one per row, entries exactly +-1."""

    n_pilots: int
    sequences: np.ndarray  # (n_pilots, n_pilots) float64

    def row(self, j: int) -> np.ndarray:
        return self.sequences[j]


def build_pilot_book(n_pilots: int) -> PilotBook:
    """Sylvester-Hadamard pilot book with rows in natural construction order.

    n_pilots must be a power of two, at least 2.  Row length equals the
    number of pilots, so per-symbol pilot energy is 1 and cross-correlations
    vanish bit-exactly.
    """
    if n_pilots < 2 or n_pilots & (n_pilots - 1):
        raise ValueError(f"pilot count must be a power of two >= 2, got {n_pilots}")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < n_pilots:
        h = np.block([[h, h], [h, -h]])
    return PilotBook(n_pilots=n_pilots, sequences=h.astype(np.float64))


@dataclass(frozen=True)
class Constellation:
    """Gray-labelled square QAM with unit mean symbol energy.

    points[i] is the symbol whose bit label is the binary expansion of i,
    most significant bit first.  The first half of the label selects the
    real amplitude, the second half the imaginary one; per axis the label
    half is a Gray code over amplitudes ordered from most positive to most
    negative, so the all-zero label maps to the most positive point (for
    order 4 that is (1+1j)/sqrt(2)).
    """

    order: int
    bits_per_symbol: int
    points: np.ndarray      # (order,) complex128
    bit_labels: np.ndarray  # (order, bits_per_symbol) uint8


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = 1
    while shift < 32:
        b ^= b >> shift
        shift <<= 1
    return b


def square_qam(order: int) -> Constellation:
    m = int(order).bit_length() - 1
    if order < 4 or (1 << m) != order or m % 2:
        raise ValueError(f"square QAM needs order in {{4, 16, 64, ...}}, got {order}")
    half = m // 2
    side = 1 << half
    # mean energy of the +-1, +-3, ... lattice is 2(order-1)/3 per symbol
    scale = np.sqrt(3.0 / (2.0 * (order - 1)))
    labels = np.arange(order)
    hi = labels >> half
    lo = labels & (side - 1)
    # label halves are Gray codewords; their binary value ranks the amplitude
    # from most positive downward
    amp_of_half = (side - 1 - 2 * _gray_to_binary(np.arange(side))).astype(np.float64) * scale
    points = amp_of_half[hi] + 1j * amp_of_half[lo]
    bit_labels = (labels[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1
    return Constellation(order, m, points.astype(np.complex128), bit_labels.astype(np.uint8))


def modulate(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map a bit vector (length divisible by bits_per_symbol) to symbols."""
    bits = np.asarray(bits, dtype=np.uint8)
    m = c.bits_per_symbol
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by {m}")
    weights = 1 << np.arange(m - 1, -1, -1)
    idx = bits.reshape(-1, m) @ weights
    return c.points[idx]


def demap_hard(symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest-point hard demapping; ties break toward the smaller index."""
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    d2 = np.abs(symbols[:, None] - c.points[None, :]) ** 2
    idx = np.argmin(d2, axis=1)  # first occurrence wins on ties
    return c.bit_labels[idx].reshape(-1)


@dataclass(frozen=True)
class CodeSpec:
    """Block code parameters for the genie bounded-distance decoder.

    n coded bits carry k information bits and correct up to t bit errors.
    n_extra counts CRC and padding overhead charged against the payload in
    rate accounting; it does not affect decoding.
    """

    n: int
    k: int
    t: int
    n_extra: int = 0

    def __post_init__(self):
        if not (0 < self.k <= self.n):
            raise ValueError(f"need 0 < k <= n, got k={self.k} n={self.n}")
        if self.t < 0 or self.n_extra < 0:
            raise ValueError("t and n_extra must be non-negative")

    @property
    def rate(self) -> float:
        return self.k / self.n


def bounded_distance_decode(received: np.ndarray, codeword: np.ndarray, code: CodeSpec) -> bool:
    """Genie decode: success iff Hamming distance to the true codeword <= t.

    Models a bounded-distance decoder whose output is then confirmed by a
    perfect CRC, so miscorrections never count as successes.
    """
    received = np.asarray(received)
    codeword = np.asarray(codeword)
    if received.size != code.n or codeword.size != code.n:
        raise ValueError(
            f"length mismatch: got {received.size} and {codeword.size}, code has n={code.n}"
        )
    return int(np.count_nonzero(received != codeword)) <= code.t


def random_codeword(code: CodeSpec, rng: np.random.Generator) -> np.ndarray:
    """Stand-in codeword: n uniform bits (the genie never re-encodes)."""
    return rng.integers(0, 2, size=code.n, dtype=np.uint8)


def pad_for_modulation(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Zero-pad a bit vector up to a multiple of bits_per_symbol.

    Odd-length codewords gain a trailing zero bit before QPSK mapping; the
    pad carries no information and is ignored by the decoder.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    rem = (-bits.size) % c.bits_per_symbol
    if rem == 0:
        return bits
    return np.concatenate([bits, np.zeros(rem, dtype=np.uint8)])


def symbols_per_codeword(code: CodeSpec, c: Constellation) -> int:
    return (code.n + c.bits_per_symbol - 1) // c.bits_per_symbol
