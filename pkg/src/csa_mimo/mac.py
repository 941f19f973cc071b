"""Medium access layer: replica placement over the slot/pilot grid.

A frame is n_slots x n_pilots resources.  Each active user transmits
`repetitions` copies of its packet in distinct slots and picks an
independent uniform pilot for every copy.  Placement is either uniform
(any slot subset) or intra-frame spatially coupled (consecutive slots,
no wraparound at the frame edge), the latter enabling per-slot ACK
feedback that suppresses a decoded user's remaining replicas.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

PROTOCOLS = ("baseline", "sc_ack")
COHERENCE_MODES = ("per_slot", "per_user")


@dataclass(frozen=True)
class FrameConfig:
    n_slots: int
    n_pilots: int
    repetitions: int
    k_active: int
    protocol: str = "baseline"
    coherence: str = "per_slot"

    def __post_init__(self):
        if self.n_slots < 1 or self.n_pilots < 1:
            raise ValueError("n_slots and n_pilots must be positive")
        if not (1 <= self.repetitions <= self.n_slots):
            raise ValueError(
                f"repetitions must lie in [1, n_slots], got r={self.repetitions} n_slots={self.n_slots}"
            )
        if self.k_active < 0:
            raise ValueError("k_active must be >= 0")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.coherence not in COHERENCE_MODES:
            raise ValueError(f"unknown coherence mode {self.coherence!r}")


@dataclass
class FrameAllocation:
    """Replica placement of one frame.

    slots[u] holds the (ascending) slot indices of user u's replicas and
    pilots[u] the pilot index of each.  suppressed[u, i] marks replicas
    withdrawn by ACK feedback before transmission.
    """

    config: FrameConfig
    slots: np.ndarray       # (k_active, repetitions) int64
    pilots: np.ndarray      # (k_active, repetitions) int64
    suppressed: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.suppressed is None:
            self.suppressed = np.zeros(self.slots.shape, dtype=bool)

    @property
    def k_active(self) -> int:
        return self.slots.shape[0]


def place_uniform(cfg: FrameConfig, rng: np.random.Generator) -> FrameAllocation:
    """Uniformly random distinct slots per user, i.i.d. uniform pilots."""
    k, r = cfg.k_active, cfg.repetitions
    if k == 0:
        empty = np.zeros((0, r), dtype=np.int64)
        return FrameAllocation(cfg, empty, empty.copy())
    # random keys per slot: the r smallest ranks form a uniform r-subset
    keys = rng.random((k, cfg.n_slots))
    slots = np.sort(np.argpartition(keys, r - 1, axis=1)[:, :r], axis=1).astype(np.int64)
    pilots = rng.integers(0, cfg.n_pilots, size=(k, r), dtype=np.int64)
    return FrameAllocation(cfg, slots, pilots)


def place_spatially_coupled(cfg: FrameConfig, rng: np.random.Generator) -> FrameAllocation:
    """Consecutive-slot placement: uniform start, no wraparound.

    Start slots are uniform on [0, n_slots - r], so every replica run fits
    inside the frame; edge slots are covered by fewer runs by construction.
    """
    k, r = cfg.k_active, cfg.repetitions
    if k == 0:
        empty = np.zeros((0, r), dtype=np.int64)
        return FrameAllocation(cfg, empty, empty.copy())
    starts = rng.integers(0, cfg.n_slots - r + 1, size=k, dtype=np.int64)
    slots = starts[:, None] + np.arange(r, dtype=np.int64)[None, :]
    pilots = rng.integers(0, cfg.n_pilots, size=(k, r), dtype=np.int64)
    return FrameAllocation(cfg, slots, pilots)


def apply_ack(alloc: FrameAllocation, user: int, decoded_at_slot: int) -> FrameAllocation:
    """Suppress a decoded user's replicas in slots strictly after the decode.

    Only meaningful when per-slot feedback exists, i.e. under the sc_ack
    protocol; calling it under baseline is a protocol violation.
    """
    if alloc.config.protocol != "sc_ack":
        raise ValueError("ACK feedback requires the sc_ack protocol")
    alloc.suppressed[user] |= alloc.slots[user] > decoded_at_slot
    return alloc


def format_allocation(alloc: FrameAllocation) -> str:
    """Dump format: one line per user, "user_id: (slot,pilot) (slot,pilot) ..."."""
    lines = []
    for u in range(alloc.k_active):
        pairs = " ".join(
            f"({s},{p})" for s, p in zip(alloc.slots[u].tolist(), alloc.pilots[u].tolist())
        )
        lines.append(f"{u}: {pairs}")
    return "\n".join(lines) + ("\n" if lines else "")


_PAIR_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")


def parse_allocation(text: str) -> dict[int, list[tuple[int, int]]]:
    """Parse the dump format into {user_id: [(slot, pilot), ...]}.

    Blank lines and '#' comments are ignored.  User ids and indices are
    kept exactly as written; consumers decide on any base convention.
    """
    out: dict[int, list[tuple[int, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ValueError(f"line {lineno}: expected 'user: (slot,pilot) ...', got {raw!r}")
        head, rest = line.split(":", 1)
        try:
            user = int(head)
        except ValueError as e:
            raise ValueError(f"line {lineno}: bad user id {head!r}") from e
        pairs = [(int(a), int(b)) for a, b in _PAIR_RE.findall(rest)]
        if not pairs:
            raise ValueError(f"line {lineno}: no (slot,pilot) pairs found")
        if user in out:
            raise ValueError(f"line {lineno}: duplicate user id {user}")
        out[user] = pairs
    return out
