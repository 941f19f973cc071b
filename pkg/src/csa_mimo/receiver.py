"""Base-station receiver: estimation, decoding and interference cancellation.

Per slot, the receiver correlates the pilot phase against every pilot
sequence, forms maximal-ratio-combining payload estimates, and attempts a
decode on every pilot.  Successfully decoded packets enter a FIFO buffer;
the cancellation loop then subtracts each buffered packet's replicas and
re-attempts decoding where the residual changed.

Two subtraction algorithms are implemented.  The mean-gain update ('chb')
subtracts antennas * x from the per-resource payload accumulator, relying
on the concentration of ||h||^2 around the antenna count, and touches
nothing outside that pilot.  The payload-aided update ('pab') subtracts a
channel estimate from the full slot signal, improving every pilot of the
slot: the current pilot correlation where the replica's pilot is clean,
or a correlation of the residual payload with the known decoded symbols
when the pilot is collided.  Those collided-pilot estimates are made in
still-crowded slots, so a single corrective pass after the buffer first
drains re-estimates them against the cleaned residual.  'prce' keeps the
pab control flow but subtracts with the true channel vectors, bounding
what ideal cancellation could achieve.  An instantaneous per-slot
scheduler optionally cancels within the slot immediately upon decode and
re-sweeps its pilots.

Decoding itself is genie-aided: an attempt on a pilot can only succeed for
the unique not-yet-decoded user currently occupying it (superposed packets
always fail under power control), and success is decided by hard-demapping
the estimate and comparing against that user's true codeword within the
code's correction radius.  All arithmetic on the estimate is real receiver
processing; only the success test uses truth.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mac
from .channel import NoiseSpec, SlotSignal, complex_noise, draw_channel, substream, synthesize_slot
from .signalcore import (
    CodeSpec,
    Constellation,
    PilotBook,
    bounded_distance_decode,
    demap_hard,
    modulate,
    pad_for_modulation,
    random_codeword,
    symbols_per_codeword,
)

ALGORITHMS = ("chb", "pab", "prce")

# pilots whose accumulated gain falls at or below this times the antenna
# count are treated as exhausted: no decode attempt is made on them
G_CLAMP_FACTOR = 1e-6

# a refinement correction is applied only when its energy exceeds this
# multiple of the residual-noise correlation floor (antennas * noise
# variance / payload length); weaker corrections would add noise
REFINE_SKIP_FACTOR = 5.0

# sub-stream roles within one frame's key space
_ROLE_ALLOC, _ROLE_PAYLOAD, _ROLE_CHANNEL, _ROLE_NOISE = 0, 1, 2, 3


@dataclass
class PilotEstimate:
    """Pilot-correlation channel estimate phi for one (slot, pilot)."""

    phi: np.ndarray
    pilot: int = -1
    slot: int = -1


@dataclass
class MrcAccumulators:
    """Per-resource combining state: f = phi^H Y and g = ||phi||^2."""

    f: np.ndarray
    g: float


@dataclass
class UserTransmission:
    """Genie-side truth for one user."""

    user: int
    codeword: np.ndarray
    symbols: np.ndarray
    slots: np.ndarray
    pilots: np.ndarray


@dataclass
class DecodedPacket:
    """A CRC-validated decode, buffered for the cancellation phase."""

    user: int
    symbols: np.ndarray
    replicas: list[tuple[int, int]]
    gen_slot: int
    gen_pilot: int
    phi: Optional[np.ndarray] = None


@dataclass
class TraceEvent:
    frame: int
    slot: int
    pilot: int
    user: int
    kind: str  # "decode" or "subtract"
    iteration: int  # 0 during initialization, buffer pop ordinal in SIC

    def line(self) -> str:
        return (
            f"frame={self.frame} slot={self.slot} pilot={self.pilot} "
            f"user={self.user} kind={self.kind} iter={self.iteration}"
        )


@dataclass
class FrameStats:
    k_active: int
    decoded: int
    init_attempts: int
    sic_attempts: int
    init_subtractions: int
    sic_subtractions: int
    synthesized_replicas: int
    refinements: int = 0

    @property
    def lost(self) -> int:
        return self.k_active - self.decoded

    @property
    def attempts(self) -> int:
        return self.init_attempts + self.sic_attempts

    @property
    def subtractions(self) -> int:
        return self.init_subtractions + self.sic_subtractions


# ---------------------------------------------------------------------------
# stateless receiver operations


def estimate_channel_pilot(
    slot: SlotSignal, pilot_row: np.ndarray, pilot: int = -1, slot_index: int = -1
) -> PilotEstimate:
    """Correlate the pilot phase against one pilot sequence.

    phi = P s^H / ||s||^2; for a lone user on the pilot this is its channel
    vector plus noise of per-entry variance sigma_n^2 / pilot_len.
    """
    s = np.asarray(pilot_row)
    phi = slot.pilot @ s.conj() / np.real(s @ s.conj())
    return PilotEstimate(phi=phi, pilot=pilot, slot=slot_index)


def estimate_all_pilots(slot: SlotSignal, book: PilotBook) -> np.ndarray:
    """All pilot estimates at once, as columns of an (antennas, n_pilots) array."""
    return slot.pilot @ book.sequences.conj().T / book.n_pilots


def mrc_estimate(
    phi: PilotEstimate | np.ndarray, payload: np.ndarray
) -> tuple[MrcAccumulators, Optional[np.ndarray]]:
    """Maximal ratio combining: f = phi^H Y, g = ||phi||^2, x_hat = f/g.

    Returns x_hat = None when g is at or below the exhaustion clamp, which
    signals an over-cancelled or empty pilot; no decode should be attempted.
    """
    v = phi.phi if isinstance(phi, PilotEstimate) else np.asarray(phi)
    g = float(np.real(v.conj() @ v))
    f = v.conj() @ payload
    acc = MrcAccumulators(f=f, g=g)
    if g <= G_CLAMP_FACTOR * v.shape[0]:
        return acc, None
    return acc, f / g


def attempt_decode(
    x_hat: np.ndarray,
    truth: UserTransmission,
    code: CodeSpec,
    constellation: Constellation,
    gen_slot: int = -1,
    gen_pilot: int = -1,
    phi: Optional[np.ndarray] = None,
) -> Optional[DecodedPacket]:
    """Demap the estimate and test it against the candidate's true codeword."""
    bits = demap_hard(x_hat, constellation)[: code.n]
    if not bounded_distance_decode(bits, truth.codeword, code):
        return None
    return DecodedPacket(
        user=truth.user,
        symbols=truth.symbols,
        replicas=list(zip(truth.slots.tolist(), truth.pilots.tolist())),
        gen_slot=gen_slot,
        gen_pilot=gen_pilot,
        phi=phi,
    )


def chb_subtract(acc: MrcAccumulators, x: np.ndarray, antennas: int) -> MrcAccumulators:
    """Mean-gain subtraction: f -= antennas * x, g -= antennas (clamped)."""
    acc.f -= antennas * x
    acc.g = max(acc.g - antennas, G_CLAMP_FACTOR * antennas)
    return acc


def pab_subtract_generator(
    slot: SlotSignal, phi: PilotEstimate | np.ndarray, pilot_row: np.ndarray, x: np.ndarray
) -> SlotSignal:
    """Generator-slot subtraction using the pilot-based channel estimate.

    The estimate is deliberately not recomputed: on a decoded singleton it
    is impaired only by noise, and subtracting phi zeroes the pilot's
    correlation in P exactly.
    """
    v = phi.phi if isinstance(phi, PilotEstimate) else np.asarray(phi)
    slot.pilot -= v[:, None] * np.asarray(pilot_row)[None, :]
    slot.payload -= v[:, None] * x[None, :]
    return slot


def estimate_channel_payload(payload: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Correlate the residual payload observation with known symbols.

    h_hat = Y x^H / ||x||^2; the error has per-entry variance close to
    (slot users - 1 + sigma_n^2) / payload_len.
    """
    return payload @ x.conj() / np.real(x @ x.conj())


def pab_subtract_replica(
    slot: SlotSignal, h_hat: np.ndarray, pilot_row: np.ndarray, x: np.ndarray
) -> SlotSignal:
    """Replica-slot subtraction with a payload-based (or true) channel vector."""
    slot.pilot -= h_hat[:, None] * np.asarray(pilot_row)[None, :]
    slot.payload -= h_hat[:, None] * x[None, :]
    return slot


# ---------------------------------------------------------------------------
# frame realization


@dataclass
class FrameRealization:
    """Everything random about one frame, fixed before any processing.

    Channels, payloads and the allocation are pre-drawn from counter-keyed
    sub-streams so the same realization can be replayed under different
    receiver algorithms (paired comparisons) or worker schedules.  Noise is
    drawn per slot at synthesis time from its own keyed stream, which makes
    slot signals identical across replays as well.
    """

    frame_config: mac.FrameConfig
    allocation: mac.FrameAllocation
    book: PilotBook
    constellation: Constellation
    code: CodeSpec
    noise: NoiseSpec
    antennas: int
    payload_len: int
    codewords: np.ndarray  # (k, n) uint8
    symbols: np.ndarray    # (k, payload_len) complex128
    channels: np.ndarray   # (k, repetitions, antennas) complex128
    seed_key: Optional[tuple[int, int, int]] = None  # (seed, point, frame)
    frame_index: int = 0

    def noise_rng(self, slot: int) -> np.random.Generator:
        if self.seed_key is None:
            return np.random.default_rng(0)
        seed, point, frame = self.seed_key
        return substream(seed, point, frame, _ROLE_NOISE, slot)

    def transmission(self, user: int) -> UserTransmission:
        return UserTransmission(
            user=user,
            codeword=self.codewords[user],
            symbols=self.symbols[user],
            slots=self.allocation.slots[user],
            pilots=self.allocation.pilots[user],
        )


def draw_frame_allocation(
    frame_cfg: mac.FrameConfig, seed: int, point_index: int, frame_index: int
) -> mac.FrameAllocation:
    """Draw the slot/pilot allocation exactly as build_frame_realization does.

    Collision-channel benchmarks use this to replay the same placements as
    the physical-layer receiver without drawing payloads or channels.
    """
    alloc_rng = substream(seed, point_index, frame_index, _ROLE_ALLOC)
    if frame_cfg.protocol == "sc_ack":
        return mac.place_spatially_coupled(frame_cfg, alloc_rng)
    return mac.place_uniform(frame_cfg, alloc_rng)


def build_frame_realization(
    frame_cfg: mac.FrameConfig,
    book: PilotBook,
    constellation: Constellation,
    code: CodeSpec,
    noise: NoiseSpec,
    antennas: int,
    seed: int,
    point_index: int,
    frame_index: int,
) -> FrameRealization:
    """Draw allocation, payloads and channels for one frame."""
    if book.n_pilots != frame_cfg.n_pilots:
        raise ValueError("pilot book size does not match the frame configuration")
    k, r = frame_cfg.k_active, frame_cfg.repetitions
    payload_len = symbols_per_codeword(code, constellation)

    alloc = draw_frame_allocation(frame_cfg, seed, point_index, frame_index)

    payload_rng = substream(seed, point_index, frame_index, _ROLE_PAYLOAD)
    codewords = np.empty((k, code.n), dtype=np.uint8)
    symbols = np.empty((k, payload_len), dtype=np.complex128)
    for u in range(k):
        cw = random_codeword(code, payload_rng)
        codewords[u] = cw
        symbols[u] = modulate(pad_for_modulation(cw, constellation), constellation)

    chan_rng = substream(seed, point_index, frame_index, _ROLE_CHANNEL)
    if frame_cfg.coherence == "per_user":
        base = draw_channel(chan_rng, antennas, count=max(k, 1))[:k]
        channels = np.broadcast_to(base[:, None, :], (k, r, antennas))
    else:
        channels = draw_channel(chan_rng, antennas, count=max(k * r, 1))[: k * r]
        channels = channels.reshape(k, r, antennas)

    return FrameRealization(
        frame_config=frame_cfg,
        allocation=alloc,
        book=book,
        constellation=constellation,
        code=code,
        noise=noise,
        antennas=antennas,
        payload_len=payload_len,
        codewords=codewords,
        symbols=symbols,
        channels=channels,
        seed_key=(seed, point_index, frame_index),
        frame_index=frame_index,
    )


# ---------------------------------------------------------------------------
# frame processor (receiver state + Algorithm-1 control flow)


class FrameProcessor:
    """Receiver state for one frame.

    Slot processing order matters (ACK feedback and instantaneous
    cancellation are slot-sequential), so the processor is strictly
    sequential and confined to one frame.

    In 'chb' mode only per-resource (f, g) accumulators are retained after
    a slot is processed; 'pab' and 'prce' keep the residual slot signals
    and their pilot-estimate columns, which the subtractions mutate.
    """

    def __init__(
        self,
        real: FrameRealization,
        algorithm: str,
        instantaneous: bool = False,
        trace: Optional[list] = None,
    ):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
        cfg = real.frame_config
        if cfg.protocol == "sc_ack" and not instantaneous:
            raise ValueError("sc_ack feedback requires instantaneous cancellation")
        self.real = real
        self.algorithm = algorithm
        self.instantaneous = instantaneous
        self.trace = trace

        self.n_slots = cfg.n_slots
        self.n_pilots = cfg.n_pilots
        self.antennas = real.antennas
        self._eps_g = G_CLAMP_FACTOR * real.antennas

        # private allocation clone: ACK suppression must not leak into the
        # realization, which may be replayed under another algorithm
        self.alloc = mac.FrameAllocation(
            cfg, real.allocation.slots, real.allocation.pilots, real.allocation.suppressed.copy()
        )

        k, r = cfg.k_active, cfg.repetitions
        self._slot_replicas: list[list[tuple[int, int]]] = [[] for _ in range(self.n_slots)]
        self._replica_at: dict[tuple[int, int], int] = {}
        for u in range(k):
            for ri in range(r):
                s = int(self.alloc.slots[u, ri])
                self._slot_replicas[s].append((u, ri))
                self._replica_at[(u, s)] = ri

        self.decoded = np.zeros(k, dtype=bool)
        self.subtracted = np.zeros((k, r), dtype=bool)
        self.found = np.zeros((self.n_slots, self.n_pilots), dtype=bool)
        self._occ_count = np.zeros((self.n_slots, self.n_pilots), dtype=np.int32)
        self._occ_idsum = np.zeros((self.n_slots, self.n_pilots), dtype=np.int64)
        self.buffer: deque[DecodedPacket] = deque()

        if algorithm == "chb":
            self._acc_f = np.zeros((self.n_slots, self.n_pilots, real.payload_len), dtype=np.complex128)
            self._acc_g = np.zeros((self.n_slots, self.n_pilots), dtype=np.float64)
            self._slots: list[Optional[SlotSignal]] = []
            self._phi: list[Optional[np.ndarray]] = []
        else:
            self._slots = [None] * self.n_slots
            self._phi = [None] * self.n_slots

        self.init_attempts = 0
        self.sic_attempts = 0
        self.init_subtractions = 0
        self.sic_subtractions = 0
        self.synthesized_replicas = 0
        self.refinements = 0
        self._sic_iter = 0
        self._in_sic = False
        self._payload_subs: list[tuple[int, int, int]] = []
        self._refine_floor = (
            REFINE_SKIP_FACTOR * real.antennas * real.noise.variance / real.payload_len
        )

    # -- synthesis ---------------------------------------------------------

    def synthesize(self, s: int) -> SlotSignal:
        """Build slot s from its currently unsuppressed replicas plus noise."""
        real = self.real
        contribs = []
        for u, ri in self._slot_replicas[s]:
            if self.alloc.suppressed[u, ri]:
                continue
            p = int(self.alloc.pilots[u, ri])
            contribs.append((real.channels[u, ri], real.book.row(p), real.symbols[u]))
            self._occ_count[s, p] += 1
            self._occ_idsum[s, p] += u
            self.synthesized_replicas += 1
        return synthesize_slot(
            contribs, real.noise, real.noise_rng(s), self.antennas,
            real.book.n_pilots, real.payload_len,
        )

    # -- decode attempt machinery -----------------------------------------

    def _candidates(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        """Pilots eligible for a genuine attempt: not found, lone undecoded user."""
        mask = (~self.found[s]) & (self._occ_count[s] == 1)
        pilots = np.nonzero(mask)[0]
        if pilots.size == 0:
            return pilots, pilots
        users = self._occ_idsum[s, pilots]
        keep = ~self.decoded[users]
        return pilots[keep], users[keep]

    def _evaluate(
        self, s: int, pilots: np.ndarray, users: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Genuine decode attempts on the given pilots; returns success flags.

        Vectorized over pilots: the slot state does not change within one
        pass, so batching is exact.
        """
        real = self.real
        if pilots.size == 0:
            return np.zeros(0, dtype=bool), np.zeros((0, real.payload_len), dtype=np.complex128)
        if self.algorithm == "chb":
            g = self._acc_g[s, pilots]
            f = self._acc_f[s, pilots]
        else:
            phi_cols = self._phi[s][:, pilots]
            g = np.sum(phi_cols.real**2 + phi_cols.imag**2, axis=0)
            f = phi_cols.conj().T @ self._slots[s].payload
        live = g > self._eps_g
        ok = np.zeros(pilots.size, dtype=bool)
        if not np.any(live):
            return ok, f
        xh = f[live] / g[live, None]
        bits = demap_hard(xh.ravel(), real.constellation)
        bits = bits.reshape(xh.shape[0], -1)[:, : real.code.n]
        dist = np.count_nonzero(bits != real.codewords[users[live]], axis=1)
        ok[live] = dist <= real.code.t
        return ok, f

    def _capture_phi(self, s: int, p: int) -> Optional[np.ndarray]:
        if self._phi and self._phi[s] is not None:
            return self._phi[s][:, p].copy()
        return None

    def _record_decode(self, s: int, p: int, u: int) -> DecodedPacket:
        real = self.real
        self.decoded[u] = True
        self.found[s, p] = True
        pkt = DecodedPacket(
            user=u,
            symbols=real.symbols[u],
            replicas=list(zip(self.alloc.slots[u].tolist(), self.alloc.pilots[u].tolist())),
            gen_slot=s,
            gen_pilot=p,
            phi=self._capture_phi(s, p),
        )
        self.buffer.append(pkt)
        if self.trace is not None:
            self.trace.append(
                TraceEvent(self.real.frame_index, s, p, u, "decode", self._sic_iter)
            )
        return pkt

    def _subtract_at(self, s: int, p: int, u: int, vector: Optional[np.ndarray]) -> None:
        """Remove user u's replica at (s, p) from the residual state.

        vector is the channel estimate used for the subtraction; None means
        the mean-gain accumulator update ('chb' mode).
        """
        real = self.real
        ri = self._replica_at[(u, s)]
        if self.algorithm == "chb":
            self._acc_f[s, p] -= self.antennas * real.symbols[u]
            self._acc_g[s, p] = max(self._acc_g[s, p] - self.antennas, self._eps_g)
        else:
            sig = self._slots[s]
            row = real.book.row(p)
            sig.pilot -= vector[:, None] * row[None, :]
            sig.payload -= vector[:, None] * real.symbols[u][None, :]
            self._phi[s][:, p] -= vector
        self.subtracted[u, ri] = True
        self._occ_count[s, p] -= 1
        self._occ_idsum[s, p] -= u
        if self._in_sic:
            self.sic_subtractions += 1
        else:
            self.init_subtractions += 1
        if self.trace is not None:
            self.trace.append(
                TraceEvent(self.real.frame_index, s, p, u, "subtract", self._sic_iter)
            )

    def _generator_vector(self, pkt: DecodedPacket, u: int, s: int) -> Optional[np.ndarray]:
        if self.algorithm == "chb":
            return None
        if self.algorithm == "prce":
            return self.real.channels[u, self._replica_at[(u, s)]]
        return pkt.phi  # pab: decode-time pilot estimate

    # -- initialization (per-slot processing) ------------------------------

    def process_slot(
        self, s: int, sig: SlotSignal, instantaneous: Optional[bool] = None
    ) -> list[DecodedPacket]:
        """One slot of initialization; returns the packets decoded here.

        Plain mode sweeps all pilots once, buffering successes.  In
        instantaneous mode every success is immediately cancelled from the
        slot (pilot-based estimate, or the accumulator update in 'chb'
        mode) and the sweep restarts from pilot 0, skipping pilots where a
        user was already found, until a full sweep decodes nothing.
        """
        inst = self.instantaneous if instantaneous is None else instantaneous
        real = self.real
        phi = estimate_all_pilots(sig, real.book)
        if self.algorithm == "chb":
            self._acc_g[s] = np.sum(phi.real**2 + phi.imag**2, axis=0)
            self._acc_f[s] = phi.conj().T @ sig.payload
            self._phi = [None] * self.n_slots
            self._phi[s] = phi  # transient, for packet metadata only
        else:
            self._slots[s] = sig
            self._phi[s] = phi

        decoded_here: list[DecodedPacket] = []
        while True:
            pilots, users = self._candidates(s)
            ok, _ = self._evaluate(s, pilots, users)
            hits = np.nonzero(ok)[0]
            if not inst or hits.size == 0:
                # full pass over every non-skipped pilot
                self.init_attempts += int(np.count_nonzero(~self.found[s]))
                for i in hits:
                    decoded_here.append(self._record_decode(s, int(pilots[i]), int(users[i])))
                break
            i = int(hits[0])
            p, u = int(pilots[i]), int(users[i])
            # the sweep stops at the first success: count only pilots visited
            self.init_attempts += int(np.count_nonzero(~self.found[s, : p + 1]))
            pkt = self._record_decode(s, p, u)
            decoded_here.append(pkt)
            self._subtract_at(s, p, u, self._generator_vector(pkt, u, s))
            if self.alloc.config.protocol == "sc_ack":
                mac.apply_ack(self.alloc, u, s)
        if self.algorithm == "chb":
            self._phi[s] = None  # slot signals are not retained in chb mode
        return decoded_here

    # -- cancellation loop --------------------------------------------------

    def _resweep_slot(self, s: int) -> None:
        """Re-attempt every non-found pilot of a touched slot (pab/prce)."""
        pilots, users = self._candidates(s)
        ok, _ = self._evaluate(s, pilots, users)
        self.sic_attempts += int(np.count_nonzero(~self.found[s]))
        for i in np.nonzero(ok)[0]:
            self._record_decode(s, int(pilots[i]), int(users[i]))

    def _reattempt_resource(self, s: int, p: int) -> None:
        """Targeted re-attempt on one pilot after a 'chb' update."""
        self.sic_attempts += 1
        if self.found[s, p] or self._occ_count[s, p] != 1:
            return
        u = int(self._occ_idsum[s, p])
        if self.decoded[u]:
            return
        if self._acc_g[s, p] <= self._eps_g:
            return
        arr = np.array([p])
        ok, _ = self._evaluate(s, arr, np.array([u]))
        if ok[0]:
            self._record_decode(s, p, u)

    def run_sic(self) -> np.ndarray:
        """Drain the FIFO buffer, subtracting replicas and re-attempting.

        For each popped user, replicas are processed in ascending slot
        order.  'chb' updates the resource accumulator and re-attempts that
        pilot only; 'pab'/'prce' subtract from the slot signal and re-sweep
        the whole slot.  The 'pab' subtraction vector is the stored decode
        estimate at the generator, the current pilot estimate where the
        replica's pilot is uncollided, and a payload-based re-estimate only
        under pilot collision; 'prce' uses the true channel vectors.

        Payload-based estimates are made while their slots are still
        crowded, so after the buffer first drains one corrective pass
        re-estimates each of them against the now much cleaner residual
        and subtracts the correction; decodes unlocked by that pass are
        then cancelled the same way.  Returns the per-user decode status.
        """
        real = self.real
        per_user_coherence = real.frame_config.coherence == "per_user"
        self._in_sic = True
        refined = False
        while True:
            while self.buffer:
                pkt = self.buffer.popleft()
                self._sic_iter += 1
                u = pkt.user
                order = np.argsort(self.alloc.slots[u], kind="stable")
                for ri in order:
                    ri = int(ri)
                    if self.alloc.suppressed[u, ri] or self.subtracted[u, ri]:
                        continue
                    s = int(self.alloc.slots[u, ri])
                    p = int(self.alloc.pilots[u, ri])
                    if self.algorithm == "chb":
                        self._subtract_at(s, p, u, None)
                        self._reattempt_resource(s, p)
                        continue
                    if self.algorithm == "prce":
                        vec = real.channels[u, ri]
                    elif s == pkt.gen_slot:
                        vec = pkt.phi
                    elif per_user_coherence:
                        # replicas share the generator's channel, whose pilot
                        # estimate is noise-limited: reuse it instead of a
                        # payload-based re-estimate
                        vec = pkt.phi
                    elif int(self._occ_count[s, p]) == 1:
                        # the replica sits alone on its pilot (originally, or
                        # because co-pilot users were subtracted earlier): the
                        # current pilot estimate is noise-limited, far better
                        # than a payload-based re-estimate
                        vec = self._phi[s][:, p].copy()
                    else:
                        vec = estimate_channel_payload(self._slots[s].payload, real.symbols[u])
                        self._payload_subs.append((u, s, p))
                    self._subtract_at(s, p, u, vec)
                    self._resweep_slot(s)
            if refined or not self._payload_subs:
                break
            refined = True
            self._refine_payload_subtractions()
        self._in_sic = False
        return self.decoded.copy()

    def _refine_payload_subtractions(self) -> None:
        """Correct collided-pilot subtractions against the drained residual.

        Each payload-based estimate left an error vector in its slot whose
        energy scales with the slot load at estimation time.  Re-running
        the payload correlation on the residual recovers that error almost
        exactly once the slot is quiet, so subtracting the correction and
        re-sweeping sharpens the remaining singleton attempts.  Corrections
        at the residual-noise floor are skipped.
        """
        real = self.real
        touched = set()
        for u, s, p in self._payload_subs:
            delta = estimate_channel_payload(self._slots[s].payload, real.symbols[u])
            if float(np.sum(delta.real**2 + delta.imag**2)) <= self._refine_floor:
                continue
            sig = self._slots[s]
            sig.pilot -= delta[:, None] * real.book.row(p)[None, :]
            sig.payload -= delta[:, None] * real.symbols[u][None, :]
            self._phi[s][:, p] -= delta
            self.refinements += 1
            touched.add(s)
        for s in sorted(touched):
            self._resweep_slot(s)

    # -- orchestration ------------------------------------------------------

    def run(self) -> FrameStats:
        for s in range(self.n_slots):
            sig = self.synthesize(s)
            self.process_slot(s, sig)
        self.run_sic()
        return self.stats()

    def stats(self) -> FrameStats:
        return FrameStats(
            k_active=self.alloc.k_active,
            decoded=int(np.count_nonzero(self.decoded)),
            init_attempts=self.init_attempts,
            sic_attempts=self.sic_attempts,
            init_subtractions=self.init_subtractions,
            sic_subtractions=self.sic_subtractions,
            synthesized_replicas=self.synthesized_replicas,
            refinements=self.refinements,
        )


def run_frame(
    real: FrameRealization,
    algorithm: str,
    instantaneous: bool = False,
    trace: Optional[list] = None,
) -> FrameStats:
    """Process one frame end to end and return its counters."""
    return FrameProcessor(real, algorithm, instantaneous, trace).run()
