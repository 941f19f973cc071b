"""Block Rayleigh fading, receiver noise and per-slot signal synthesis.

Channel vectors are i.i.d. CN(0, I) across antennas; with per-slot
coherence every replica sees an independent draw, while the per-user
variant (coherence time spanning all replicas) reuses a single draw per
user.  Reproducibility relies on counter-keyed sub-streams: every random
quantity is drawn from a generator derived from (master seed, key path),
never from shared stateful RNGs, so results do not depend on scheduling
or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    """AWGN with per-complex-sample variance sigma_n^2."""

    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")


@dataclass
class SlotSignal:
    """Received baseband samples of one slot.

    pilot:   (antennas, pilot_len) observations during the pilot phase
    payload: (antennas, payload_len) observations during the data phase
    """

    pilot: np.ndarray
    payload: np.ndarray

    @property
    def antennas(self) -> int:
        return self.pilot.shape[0]


def substream(seed: int, *key: int) -> np.random.Generator:
    """Child generator keyed by (seed, key path), independent of draw order.

    SeedSequence spawn keys act as counters, so two equal key paths always
    yield the same stream and distinct paths yield independent ones.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def draw_channel(rng: np.random.Generator, antennas: int, count: int | None = None) -> np.ndarray:
    """CN(0, I_M) channel vectors; (antennas,) or (count, antennas)."""
    shape = (antennas,) if count is None else (count, antennas)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(0.5) * (re + 1j * im)


def complex_noise(rng: np.random.Generator, shape: tuple[int, ...], variance: float) -> np.ndarray:
    """CN(0, variance) samples; zero variance draws nothing from the stream."""
    if variance == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_slot(
    contributions: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
    noise: NoiseSpec,
    rng: np.random.Generator,
    antennas: int,
    pilot_len: int,
    payload_len: int,
) -> SlotSignal:
    """Superimpose user contributions plus AWGN for one slot.

    contributions: iterable of (h, pilot_seq, payload_syms) per active
    replica.  An empty list yields pure noise.  All contributions share the
    slot's channel use grid, so shapes must match exactly.
    """
    pilot = complex_noise(rng, (antennas, pilot_len), noise.variance)
    payload = complex_noise(rng, (antennas, payload_len), noise.variance)
    if contributions:
        hs, ps, xs = [], [], []
        for h, s, x in contributions:
            h = np.asarray(h)
            s = np.asarray(s)
            x = np.asarray(x)
            if h.shape != (antennas,) or s.shape != (pilot_len,) or x.shape != (payload_len,):
                raise ValueError(
                    "contribution dimension mismatch: "
                    f"h{h.shape} s{s.shape} x{x.shape} vs "
                    f"({antennas},) ({pilot_len},) ({payload_len},)"
                )
            hs.append(h)
            ps.append(s)
            xs.append(x)
        H = np.stack(hs, axis=1)  # (antennas, n_active)
        pilot += H @ np.stack(ps, axis=0).astype(np.complex128)
        payload += H @ np.stack(xs, axis=0).astype(np.complex128)
    return SlotSignal(pilot=pilot, payload=payload)
