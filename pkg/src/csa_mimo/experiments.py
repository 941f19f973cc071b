"""Slot-level Monte Carlo experiments and deterministic showcase fixtures.

These experiments isolate single mechanisms of the receiver chain so the
closed-form models in analytics can be validated independently of the full
frame simulator:

- singleton_failure_mc reproduces the reference decode-failure experiment:
  one target user on a pilot, its co-pilot users already cancelled with the
  mean-gain update, interference from all other slot users retained.
- mixed_subtraction_failure_mc compares mean-gain and payload-aided
  cancellation when a fraction of the other slot users has been subtracted
  with worst-case payload-based channel estimates.
- payload_error_variance_mc measures the per-entry error variance of
  payload-based channel estimation on synthesized slots.
- build_instantaneous_showcase constructs a deterministic one-slot frame on
  which instantaneous cancellation rescues a singleton that both plain
  sweeps and accumulator-only cancellation leave undecoded.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import mac
from .analytics import InterferenceScenario, QamErrorParams, p_fail
from .channel import NoiseSpec, substream, synthesize_slot
from .receiver import (
    FrameRealization,
    chb_subtract,
    estimate_channel_payload,
    estimate_channel_pilot,
    mrc_estimate,
    pab_subtract_replica,
)
from .signalcore import (
    CodeSpec,
    Constellation,
    build_pilot_book,
    demap_hard,
    modulate,
    pad_for_modulation,
    random_codeword,
    symbols_per_codeword,
)


def singleton_failure_mc(
    n_slot_users: int,
    n_pilot_users: int,
    noise_var: float,
    n_pilots: int,
    antennas: int,
    code: CodeSpec,
    constellation: Constellation,
    trials: int,
    seed: int = 0,
    batch: Optional[int] = None,
) -> float:
    """Decode-failure probability of the last undecoded user on a pilot.

    The slot holds n_slot_users users, n_pilot_users of them on the target
    pilot.  All co-pilot users but the target have been decoded elsewhere
    and cancelled with the mean-gain accumulator update; the target is then
    demapped from the combined estimate and fails when more than t of its
    coded bits are wrong.

    The simulation is exact but avoids materializing antenna-domain
    matrices: conditioned on the pilot estimate phi, each other-pilot
    user's combined coefficient phi^H h_m is CN(0, ||phi||^2) and the
    combined payload noise is CN(0, noise_var ||phi||^2) per symbol, so
    only the co-pilot channel vectors are drawn at full length.  The
    estimate is normalized by the antenna count, as in the analytical
    model; hard decisions are unaffected by the positive scale factor.
    """
    if not (1 <= n_pilot_users <= n_slot_users):
        raise ValueError("need 1 <= n_pilot_users <= n_slot_users")
    if trials <= 0:
        raise ValueError("trials must be positive")
    m = antennas
    n_other = n_slot_users - n_pilot_users
    n_interf = (n_pilot_users - 1) + n_other
    payload_len = symbols_per_codeword(code, constellation)
    rng = substream(seed, 0)
    if batch is None:
        batch = max(16, min(trials, 4_000_000 // (max(n_interf, 1) * payload_len + 1)))

    failures = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        # co-pilot channels and the pilot-correlation noise
        hp = np.sqrt(0.5) * (
            rng.standard_normal((b, n_pilot_users, m))
            + 1j * rng.standard_normal((b, n_pilot_users, m))
        )
        zj = np.sqrt(0.5 * noise_var / n_pilots) * (
            rng.standard_normal((b, m)) + 1j * rng.standard_normal((b, m))
        )
        phi = hp.sum(axis=1) + zj
        norm2 = np.sum(phi.real**2 + phi.imag**2, axis=1)
        a = np.einsum("bm,bm->b", phi.conj(), hp[:, 0])
        # mean-gain cancellation of the decoded co-pilot users leaves
        # (phi^H h_k - M) x(k) residuals
        w_cop = np.einsum("bm,bkm->bk", phi.conj(), hp[:, 1:]) - m
        w_oth = np.sqrt(0.5) * (
            rng.standard_normal((b, n_other)) + 1j * rng.standard_normal((b, n_other))
        ) * np.sqrt(norm2)[:, None]
        weights = np.concatenate([w_cop, w_oth], axis=1)

        bits = rng.integers(0, 2, size=(b, code.n), dtype=np.uint8)
        padded = np.concatenate(
            [bits, np.zeros((b, (-code.n) % constellation.bits_per_symbol), dtype=np.uint8)],
            axis=1,
        )
        x_target = modulate(padded.ravel(), constellation).reshape(b, payload_len)
        idx = rng.integers(0, constellation.order, size=(b, n_interf, payload_len))
        x_interf = constellation.points[idx]
        noise = np.sqrt(0.5 * noise_var) * (
            rng.standard_normal((b, payload_len)) + 1j * rng.standard_normal((b, payload_len))
        ) * np.sqrt(norm2)[:, None]

        f = a[:, None] * x_target + np.einsum("bk,bkd->bd", weights, x_interf) + noise
        x_hat = f / m
        bh = demap_hard(x_hat.ravel(), constellation).reshape(b, -1)[:, : code.n]
        errs = np.count_nonzero(bh != bits, axis=1)
        failures += int(np.count_nonzero(errs > code.t))
        done += b
    return failures / trials


def singleton_failure_sweep(
    n_pilot_users: int,
    noise_var: float,
    n_pilots: int,
    antennas: int,
    n_payload: int,
    t: int,
    order: int = 4,
    p_lo: float = 0.3,
    p_hi: float = 0.9,
    max_points: int = 6,
) -> np.ndarray:
    """Slot-user counts whose analytic failure probability spans [p_lo, p_hi].

    Locates the transition region of the analytic curve by exponential
    bracketing and bisection, then returns an integer grid across it; used
    to place Monte Carlo points where the comparison is informative.

    The default band covers the waterfall of the curve.  Below it the
    Gaussian interference model is optimistic: the simulated failure
    probability at the foot exceeds the closed form by factors that grow
    with the co-pilot user count, so agreement checks are only meaningful
    inside the transition region.
    """
    q = QamErrorParams(order)

    def analytic(n_a: int) -> float:
        s = InterferenceScenario(
            n_slot_users=n_a,
            n_pilot_users=n_pilot_users,
            noise_var=noise_var,
            n_pilots=n_pilots,
            antennas=antennas,
        )
        return p_fail(s, n_payload, t, q)

    def smallest_reaching(target: float) -> int:
        lo = n_pilot_users
        hi = max(2 * n_pilot_users, 4)
        while analytic(hi) < target:
            lo, hi = hi, hi * 2
            if hi > 1 << 20:
                raise RuntimeError("failure probability never reaches the requested level")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if analytic(mid) < target:
                lo = mid
            else:
                hi = mid
        return hi

    a_lo = smallest_reaching(p_lo)
    a_hi = smallest_reaching(p_hi)
    grid = np.unique(np.round(np.linspace(a_lo, a_hi, max_points)).astype(int))
    return grid[grid >= max(n_pilot_users, 1)]


def mixed_subtraction_failure_mc(
    algorithm: str,
    n_slot_users: int,
    decoded_fraction: float,
    n_pilots: int,
    antennas: int,
    code: CodeSpec,
    constellation: Constellation,
    trials: int,
    seed: int = 0,
    noise_var: float = 0.0,
) -> float:
    """Failure probability of a singleton whose one co-pilot user was
    cancelled, while a fraction of the other slot users has been decoded.

    The target shares its pilot with exactly one other user (already
    decoded elsewhere).  A fraction decoded_fraction of the remaining
    users is cancelled as well.  Under 'chb' only the co-pilot user can be
    cancelled (accumulator update), so the result is invariant in the
    fraction; under 'pab' every cancelled user is subtracted from the slot
    signal using a payload-based channel estimate computed on the original
    received matrices, the worst case in which no earlier subtraction has
    cleaned the slot.
    """
    if algorithm not in ("chb", "pab"):
        raise ValueError("algorithm must be 'chb' or 'pab'")
    if n_slot_users < 2:
        raise ValueError("the experiment needs the target plus one co-pilot user")
    if not (0.0 <= decoded_fraction <= 1.0):
        raise ValueError("decoded_fraction must lie in [0, 1]")
    rng = substream(seed, 1)
    book = build_pilot_book(n_pilots)
    noise = NoiseSpec(noise_var)
    payload_len = symbols_per_codeword(code, constellation)
    m = antennas
    n_other = n_slot_users - 2
    n_cancel = int(round(decoded_fraction * n_other))

    failures = 0
    for _ in range(trials):
        chans = np.sqrt(0.5) * (
            rng.standard_normal((n_slot_users, m)) + 1j * rng.standard_normal((n_slot_users, m))
        )
        target_bits = random_codeword(code, rng)
        symbols = np.empty((n_slot_users, payload_len), dtype=np.complex128)
        symbols[0] = modulate(pad_for_modulation(target_bits, constellation), constellation)
        for u in range(1, n_slot_users):
            cw = random_codeword(code, rng)
            symbols[u] = modulate(pad_for_modulation(cw, constellation), constellation)
        # users 0 (target) and 1 (decoded co-pilot) share pilot 0; the rest
        # cycle over the other pilots, which only keeps them off pilot 0
        pilots = np.zeros(n_slot_users, dtype=int)
        pilots[2:] = 1 + np.arange(n_other) % (n_pilots - 1)
        contribs = [(chans[u], book.row(pilots[u]), symbols[u]) for u in range(n_slot_users)]
        slot = synthesize_slot(contribs, noise, rng, m, n_pilots, payload_len)

        if algorithm == "chb":
            acc, _ = mrc_estimate(estimate_channel_pilot(slot, book.row(0)), slot.payload)
            chb_subtract(acc, symbols[1], m)
            if acc.g <= 1e-6 * m:
                failures += 1
                continue
            x_hat = acc.f / acc.g
        else:
            cancelled = [1] + list(2 + rng.permutation(n_other)[:n_cancel])
            estimates = [estimate_channel_payload(slot.payload, symbols[u]) for u in cancelled]
            for u, h_hat in zip(cancelled, estimates):
                pab_subtract_replica(slot, h_hat, book.row(pilots[u]), symbols[u])
            acc, x_hat = mrc_estimate(estimate_channel_pilot(slot, book.row(0)), slot.payload)
            if x_hat is None:
                failures += 1
                continue
        bh = demap_hard(x_hat, constellation)[: code.n]
        if int(np.count_nonzero(bh != target_bits)) > code.t:
            failures += 1
    return failures / trials


def payload_error_variance_mc(
    n_slot_users: int,
    noise_var: float,
    n_payload: int,
    antennas: int,
    trials: int,
    seed: int = 0,
    n_pilots: int = 8,
) -> float:
    """Empirical per-entry variance of the payload-based channel estimate.

    Synthesizes slots with n_slot_users users, estimates the first user's
    channel by correlating the payload observation with its known symbols,
    and averages |h_hat - h|^2 over antenna entries and trials.  Payloads
    are uniform QPSK-like symbols from the given constellation.
    """
    rng = substream(seed, 2)
    book = build_pilot_book(n_pilots)
    noise = NoiseSpec(noise_var)
    from .signalcore import square_qam

    const = square_qam(4)
    m = antennas
    total = 0.0
    count = 0
    for _ in range(trials):
        chans = np.sqrt(0.5) * (
            rng.standard_normal((n_slot_users, m)) + 1j * rng.standard_normal((n_slot_users, m))
        )
        idx = rng.integers(0, const.order, size=(n_slot_users, n_payload))
        symbols = const.points[idx]
        pilots = np.arange(n_slot_users) % n_pilots
        contribs = [(chans[u], book.row(pilots[u]), symbols[u]) for u in range(n_slot_users)]
        slot = synthesize_slot(contribs, noise, rng, m, n_pilots, n_payload)
        h_hat = estimate_channel_payload(slot.payload, symbols[0])
        err = h_hat - chans[0]
        total += float(np.sum(err.real**2 + err.imag**2))
        count += m
    return total / count


def build_instantaneous_showcase() -> FrameRealization:
    """Deterministic one-slot frame where instantaneous cancellation wins.

    Eight pilots, eleven users, no noise, eight antennas.  Pilots 0, 1 and
    6 each hold a singleton; pilot 3 is unused; pilots 2, 4, 5 and 7 are
    collided.  The pilot-1 user's channel is aligned with a strong
    component of both other singletons' channels, so its estimate demaps
    to the wrong symbols until both are subtracted from the slot signal:
    a plain sweep decodes 2 users, instantaneous cancellation decodes 3.
    Accumulator-only cancellation also decodes 2, since it cannot improve
    pilots other than the decoded one.
    """
    n_pilots = 8
    antennas = 8
    code = CodeSpec(n=31, k=21, t=2)
    from .signalcore import square_qam

    const = square_qam(4)
    payload_len = symbols_per_codeword(code, const)
    book = build_pilot_book(n_pilots)

    cfg = mac.FrameConfig(
        n_slots=1, n_pilots=n_pilots, repetitions=1, k_active=11,
        protocol="baseline", coherence="per_slot",
    )
    pilots = np.array([[0], [1], [6], [2], [2], [4], [4], [5], [5], [7], [7]], dtype=int)
    slots = np.zeros((11, 1), dtype=int)
    alloc = mac.FrameAllocation(cfg, slots, pilots)

    e = np.eye(antennas, dtype=np.complex128)
    channels = np.zeros((11, 1, antennas), dtype=np.complex128)
    channels[0, 0] = 2 * e[0] + 10 * e[1]   # pilot-0 singleton, dominant
    channels[1, 0] = e[0]                   # pilot-1 singleton, weak
    channels[2, 0] = 2 * e[0] + 10 * e[2]   # pilot-6 singleton, dominant
    # collided users live in the orthogonal complement of e0, e1, e2 so
    # they never perturb the singletons' combining statistics
    for u, vec in enumerate(
        (e[3], e[4], e[5], e[6], e[7], e[3] + e[4], e[5] + e[6], e[7] + e[3]), start=3
    ):
        channels[u, 0] = vec

    codewords = np.zeros((11, code.n), dtype=np.uint8)
    codewords[0] = 1
    codewords[2] = 1
    for u in range(3, 11):
        codewords[u] = (np.arange(code.n) + u) % 2
    symbols = np.empty((11, payload_len), dtype=np.complex128)
    for u in range(11):
        symbols[u] = modulate(pad_for_modulation(codewords[u], const), const)

    return FrameRealization(
        frame_config=cfg,
        allocation=alloc,
        book=book,
        constellation=const,
        code=code,
        noise=NoiseSpec(0.0),
        antennas=antennas,
        payload_len=payload_len,
        codewords=codewords,
        symbols=symbols,
        channels=channels,
        seed_key=None,
    )
