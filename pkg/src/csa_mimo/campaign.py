"""Campaign orchestration: config, parallel frame execution, aggregation.

A campaign sweeps the number of active users and, for each point, runs
independent frames of the configured receiver (or of a collision-channel
benchmark), aggregating per-user loss counts into a packet loss rate with
a Wilson 95% interval and the frame sum rate.  Frames are keyed by
(seed, point index, frame index) sub-streams, so results are identical
for identical seed and configuration regardless of how frames are split
across worker processes.

Configuration is flat key=value text; unknown keys are hard errors so
typos in campaign definitions cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import logicalbench, mac
from .channel import NoiseSpec
from .receiver import build_frame_realization, draw_frame_allocation, run_frame
from .signalcore import CodeSpec, build_pilot_book, square_qam, symbols_per_codeword

PHY_MODES = ("chb", "pab", "prce")
LOGICAL_MODES = ("logical_sic", "logical_nosic")
SIC_MODES = PHY_MODES + LOGICAL_MODES


class ConfigError(ValueError):
    """Invalid or infeasible campaign configuration."""


@dataclass(frozen=True)
class CampaignConfig:
    """Full campaign description; defaults follow the reference setup."""

    latency_s: float = 0.05
    symbol_rate: float = 1e6
    antennas: int = 256
    n_pilots: int = 64
    payload_symbols: int = 256
    repetitions: int = 3
    noise_var: float = 0.1
    modulation_order: int = 4
    code_n: int = 511
    code_k: int = 421
    code_t: int = 10
    n_extra: int = 33
    protocol: str = "baseline"
    sic: str = "pab"
    instantaneous: bool = False
    coherence: str = "per_slot"
    k_a: tuple[int, ...] = (900,)
    frames: int = 0  # 0 selects the confidence-interval-based default
    target_plr: float = 1e-3
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.latency_s <= 0 or self.symbol_rate <= 0:
            raise ConfigError("latency_s and symbol_rate must be positive")
        for name in ("antennas", "n_pilots", "payload_symbols", "repetitions",
                     "modulation_order", "code_n", "code_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.noise_var < 0:
            raise ConfigError("noise_var must be non-negative")
        if self.code_t < 0 or self.n_extra < 0:
            raise ConfigError("code_t and n_extra must be non-negative")
        if self.protocol not in mac.PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.sic not in SIC_MODES:
            raise ConfigError(f"unknown sic mode {self.sic!r}, expected one of {SIC_MODES}")
        if self.coherence not in mac.COHERENCE_MODES:
            raise ConfigError(f"unknown coherence mode {self.coherence!r}")
        if any(k < 0 for k in self.k_a) or not self.k_a:
            raise ConfigError("k_a must be a non-empty list of non-negative integers")
        if self.frames < 0:
            raise ConfigError("frames must be non-negative (0 = automatic)")
        if not (0 < self.target_plr < 1):
            raise ConfigError("target_plr must lie in (0, 1)")
        if self.seed < 0 or self.workers < 1:
            raise ConfigError("seed must be >= 0 and workers >= 1")
        try:
            code = self.code
            const = square_qam(self.modulation_order)
            build_pilot_book(self.n_pilots)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if symbols_per_codeword(code, const) != self.payload_symbols:
            raise ConfigError(
                f"payload_symbols={self.payload_symbols} does not match the padded "
                f"codeword length {symbols_per_codeword(code, const)} symbols"
            )
        if self.n_slots < self.repetitions:
            raise ConfigError(
                f"latency budget yields {self.n_slots} slots, fewer than "
                f"repetitions={self.repetitions}"
            )
        if self.protocol == "sc_ack" and self.sic in PHY_MODES and not self.instantaneous:
            raise ConfigError("sc_ack feedback requires instantaneous cancellation")

    @property
    def code(self) -> CodeSpec:
        return CodeSpec(self.code_n, self.code_k, self.code_t, self.n_extra)

    @property
    def n_slots(self) -> int:
        return slots_from_latency(
            self.latency_s, self.symbol_rate, self.n_pilots, self.payload_symbols
        )


def slots_from_latency(latency_s: float, symbol_rate: float, n_pilots: int, payload_symbols: int) -> int:
    """Slots fitting the latency budget: floor(latency * rate / (2 (N_P + N_D))).

    The factor 2 accounts for the two-dimensional (in-phase/quadrature)
    symbol accounting of the frame grid.
    """
    if latency_s <= 0 or symbol_rate <= 0 or n_pilots < 1 or payload_symbols < 1:
        raise ConfigError("slots_from_latency arguments must be positive")
    return int(math.floor(latency_s * symbol_rate / (2 * (n_pilots + payload_symbols))))


def sum_rate(p_l: float, k_a: int, cfg: CampaignConfig) -> float:
    """Delivered information bits per channel use across the frame.

    (1 - P_L) K_a (N_D log2(order) R_c - N_extra) / (N_s (N_P + N_D));
    the N_extra term removes CRC and padding bits from the numerator.
    """
    if not (0.0 <= p_l <= 1.0):
        raise ValueError(f"p_l must lie in [0, 1], got {p_l}")
    info_bits = (
        cfg.payload_symbols * math.log2(cfg.modulation_order) * cfg.code.rate - cfg.n_extra
    )
    return (1.0 - p_l) * k_a * info_bits / (cfg.n_slots * (cfg.n_pilots + cfg.payload_symbols))


def frames_for_point(cfg: CampaignConfig, k_a: int) -> int:
    """Frame count per sweep point.

    Explicit cfg.frames wins; otherwise sized so the binomial 95% interval
    half-width is at most a third of the loss rate at the configured
    target operating point: about 9 z^2 (1-p)/p user outcomes.
    """
    if cfg.frames > 0:
        return cfg.frames
    p = cfg.target_plr
    users_needed = math.ceil(9 * 1.96**2 * (1.0 - p) / p)
    return max(1, math.ceil(users_needed / max(k_a, 1)))


def wilson_interval(losses: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        return (float("nan"), float("nan"))
    p = losses / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# configuration text format

_BOOL_TRUE = {"true", "1", "yes", "on"}
_BOOL_FALSE = {"false", "0", "no", "off"}

_INT_KEYS = ("antennas", "n_pilots", "payload_symbols", "repetitions", "modulation_order",
             "code_n", "code_k", "code_t", "n_extra", "frames", "seed", "workers")
_FLOAT_KEYS = ("latency_s", "symbol_rate", "noise_var", "target_plr")
_STR_KEYS = ("protocol", "sic", "coherence")
_BOOL_KEYS = ("instantaneous",)
_LIST_KEYS = ("k_a",)
KNOWN_KEYS = _INT_KEYS + _FLOAT_KEYS + _STR_KEYS + _BOOL_KEYS + _LIST_KEYS


def _convert(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key in _LIST_KEYS:
            parts = raw.replace(",", " ").split()
            if not parts:
                raise ValueError("empty list")
            return tuple(int(p) for p in parts)
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e


def parse_config_text(text: str) -> CampaignConfig:
    """Parse flat key = value lines; '#' starts a comment.

    Unknown and duplicate keys are hard errors.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate configuration key {key!r}")
        values[key] = _convert(key, val)
    return CampaignConfig(**values)


def apply_overrides(cfg: CampaignConfig, pairs: Sequence[str]) -> CampaignConfig:
    """Apply command-line KEY=VALUE overrides on top of a parsed config."""
    values = asdict(cfg)
    values["k_a"] = tuple(values["k_a"])
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be KEY=VALUE, got {pair!r}")
        key, _, val = pair.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        values[key] = _convert(key, val)
    return CampaignConfig(**values)


# ---------------------------------------------------------------------------
# frame execution

def _logical_sequential(alloc: mac.FrameAllocation, use_sic: bool) -> int:
    """Slot-sequential collision-channel decoding with ACK suppression.

    Replicas enter the graph slot by slot; a user decoded in slot s never
    transmits its replicas in later slots.  With SIC the accumulated graph
    is peeled to fixpoint after every slot; without SIC only the current
    slot's singleton resources decode and no edges are removed.
    Returns the number of decoded users.
    """
    cfg = alloc.config
    k = alloc.k_active
    decoded = np.zeros(k, dtype=bool)
    by_slot: list[list[tuple[int, int]]] = [[] for _ in range(cfg.n_slots)]
    for u in range(k):
        for s, p in zip(alloc.slots[u].tolist(), alloc.pilots[u].tolist()):
            by_slot[s].append((u, p))
    resource_users: dict[tuple[int, int], set] = {}
    user_resources: list[list[tuple[int, int]]] = [[] for _ in range(k)]
    for s in range(cfg.n_slots):
        for u, p in by_slot[s]:
            if decoded[u]:
                continue  # suppressed by the ACK already sent
            resource_users.setdefault((s, p), set()).add(u)
            user_resources[u].append((s, p))
        if not use_sic:
            for p in sorted({p for u, p in by_slot[s]}):
                occ = resource_users.get((s, p), ())
                if len(occ) == 1:
                    decoded[next(iter(occ))] = True
            continue
        while True:
            wave = []
            for res in sorted(resource_users):
                occ = resource_users[res]
                if len(occ) == 1:
                    u = next(iter(occ))
                    if not decoded[u] and u not in wave:
                        wave.append(u)
            if not wave:
                break
            for u in wave:
                decoded[u] = True
                for res in user_resources[u]:
                    occ = resource_users.get(res)
                    if occ is not None:
                        occ.discard(u)
                        if not occ:
                            del resource_users[res]
    return int(np.count_nonzero(decoded))


def _run_chunk(cfg: CampaignConfig, k_a: int, point_index: int, start: int, stop: int) -> tuple[int, int, int]:
    """Simulate frames [start, stop); returns (lost, attempts, subtractions)."""
    fc = mac.FrameConfig(
        n_slots=cfg.n_slots, n_pilots=cfg.n_pilots, repetitions=cfg.repetitions,
        k_active=k_a, protocol=cfg.protocol, coherence=cfg.coherence,
    )
    lost = attempts = subtractions = 0
    if cfg.sic in LOGICAL_MODES:
        use_sic = cfg.sic == "logical_sic"
        for f in range(start, stop):
            alloc = draw_frame_allocation(fc, cfg.seed, point_index, f)
            if cfg.protocol == "sc_ack":
                decoded = _logical_sequential(alloc, use_sic)
            else:
                g = logicalbench.ResourceGraph.from_allocation(alloc)
                if use_sic:
                    order, _ = logicalbench.peel_with_sic(g)
                    decoded = len(set(order))
                else:
                    decoded = len(logicalbench.decode_no_sic(g))
            lost += k_a - decoded
        return lost, 0, 0

    book = build_pilot_book(cfg.n_pilots)
    const = square_qam(cfg.modulation_order)
    code = cfg.code
    noise = NoiseSpec(cfg.noise_var)
    for f in range(start, stop):
        real = build_frame_realization(
            fc, book, const, code, noise, cfg.antennas, cfg.seed, point_index, f
        )
        st = run_frame(real, cfg.sic, cfg.instantaneous)
        lost += st.lost
        attempts += st.attempts
        subtractions += st.subtractions
    return lost, attempts, subtractions


@dataclass
class PointResult:
    k_a: int
    protocol: str
    sic: str
    instantaneous: bool
    coherence: str
    frames: int
    users_total: int
    users_lost: int
    plr: Optional[float]
    plr_ci_lo: Optional[float]
    plr_ci_hi: Optional[float]
    sum_rate_bpcu: Optional[float]
    sum_rate_bps: Optional[float]
    decode_attempts: int
    subtractions: int
    wall_s: float


CSV_COLUMNS = (
    "k_a", "protocol", "sic", "instantaneous", "coherence", "frames",
    "users_total", "users_lost", "plr", "plr_ci_lo", "plr_ci_hi",
    "sum_rate_bpcu", "sum_rate_bps", "decode_attempts", "subtractions", "wall_s",
)


def run_point(cfg: CampaignConfig, k_a: int, point_index: int) -> PointResult:
    """Simulate one sweep point and aggregate its metrics."""
    t0 = time.perf_counter()
    if k_a == 0:
        # loss rate is undefined with no users; emit an empty row
        return PointResult(
            k_a=0, protocol=cfg.protocol, sic=cfg.sic, instantaneous=cfg.instantaneous,
            coherence=cfg.coherence, frames=0, users_total=0, users_lost=0,
            plr=None, plr_ci_lo=None, plr_ci_hi=None,
            sum_rate_bpcu=None, sum_rate_bps=None,
            decode_attempts=0, subtractions=0, wall_s=time.perf_counter() - t0,
        )
    frames = frames_for_point(cfg, k_a)
    edges = np.linspace(0, frames, min(cfg.workers, frames) + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if cfg.workers == 1 or len(chunks) == 1:
        parts = [_run_chunk(cfg, k_a, point_index, a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(_run_chunk, cfg, k_a, point_index, a, b) for a, b in chunks]
            parts = [f.result() for f in futs]
    lost = sum(p[0] for p in parts)
    attempts = sum(p[1] for p in parts)
    subtractions = sum(p[2] for p in parts)
    total = k_a * frames
    plr = lost / total
    ci_lo, ci_hi = wilson_interval(lost, total)
    gamma = sum_rate(plr, k_a, cfg)
    return PointResult(
        k_a=k_a, protocol=cfg.protocol, sic=cfg.sic, instantaneous=cfg.instantaneous,
        coherence=cfg.coherence, frames=frames, users_total=total, users_lost=lost,
        plr=plr, plr_ci_lo=ci_lo, plr_ci_hi=ci_hi,
        sum_rate_bpcu=gamma, sum_rate_bps=gamma * cfg.symbol_rate,
        decode_attempts=attempts, subtractions=subtractions,
        wall_s=time.perf_counter() - t0,
    )


def run_campaign(
    cfg: CampaignConfig, progress: Optional[Callable[[PointResult], None]] = None
) -> list[PointResult]:
    results = []
    for idx, ka in enumerate(cfg.k_a):
        res = run_point(cfg, ka, idx)
        results.append(res)
        if progress is not None:
            progress(res)
    return results


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def results_to_csv(results: Sequence[PointResult]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in results:
        row = []
        for col in CSV_COLUMNS:
            v = getattr(r, col)
            row.append(f"{v:.3f}" if col == "wall_s" else _fmt(v))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def results_to_json(results: Sequence[PointResult]) -> str:
    rows = []
    for r in results:
        d = {col: getattr(r, col) for col in CSV_COLUMNS}
        d["wall_s"] = round(d["wall_s"], 3)
        rows.append(d)
    return json.dumps(rows, indent=2) + "\n"
