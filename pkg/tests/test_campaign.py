import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csa_mimo import campaign, cli, logicalbench, mac
from csa_mimo.analytics import NumericalError, plr_no_sic
from csa_mimo.campaign import CampaignConfig, ConfigError
from csa_mimo.channel import NoiseSpec
from csa_mimo.receiver import build_frame_realization, run_frame
from csa_mimo.signalcore import CodeSpec, build_pilot_book, square_qam

# a deliberately tiny physical-layer setup: 6 slots of 8 pilots, 16-symbol
# payloads under a (31, 21) code, 16 antennas; fast enough to run whole
# campaign points inside unit tests
SMALL = dict(
    latency_s=0.03,
    symbol_rate=1e4,
    antennas=16,
    n_pilots=8,
    payload_symbols=16,
    repetitions=2,
    noise_var=0.5,
    code_n=31,
    code_k=21,
    code_t=2,
    n_extra=4,
    sic="pab",
    instantaneous=True,
    k_a=(40,),
    frames=6,
    seed=3,
)

SMALL_TEXT = """
# tiny campaign used by the CLI tests
latency_s = 0.03
symbol_rate = 10000
antennas = 16
n_pilots = 8
payload_symbols = 16
repetitions = 2
noise_var = 0.5
code_n = 31
code_k = 21
code_t = 2
n_extra = 4
sic = pab
instantaneous = true
k_a = 40
frames = 4
seed = 3
"""


# ---------------------------------------------------------------------------
# frame geometry and closed-form helpers


def test_slots_from_latency_reference_geometry():
    assert campaign.slots_from_latency(0.05, 1e6, 64, 256) == 78
    assert campaign.slots_from_latency(0.05, 1e6, 64, 512) == 43
    assert campaign.slots_from_latency(0.05, 1e6, 64, 128) == 130
    assert campaign.slots_from_latency(0.03, 1e4, 8, 16) == 6
    with pytest.raises(ConfigError):
        campaign.slots_from_latency(0.0, 1e6, 64, 256)
    with pytest.raises(ConfigError):
        campaign.slots_from_latency(0.05, 1e6, 0, 256)


def test_sum_rate_reference_value():
    cfg = CampaignConfig()
    assert cfg.n_slots == 78
    got = campaign.sum_rate(0.0, 1000, cfg)
    # 1000 users * (512 * 421/511 - 33) info bits over 78 * 320 channel uses
    expect = 1000 * (512 * 421 / 511 - 33) / (78 * 320)
    assert got == pytest.approx(expect, rel=1e-12)
    assert got == pytest.approx(15.578, abs=1e-3)
    assert campaign.sum_rate(0.2, 1000, cfg) < campaign.sum_rate(0.1, 1000, cfg)
    assert campaign.sum_rate(1.0, 1000, cfg) == 0.0
    with pytest.raises(ValueError):
        campaign.sum_rate(1.5, 1000, cfg)


def test_frames_for_point_sizing():
    cfg = CampaignConfig(frames=0, target_plr=1e-3)
    frames = campaign.frames_for_point(cfg, 900)
    # about 9 z^2 (1-p)/p = 34540 user outcomes at the target loss rate
    assert frames == 39
    assert frames * 900 >= 34540 > (frames - 1) * 900
    assert campaign.frames_for_point(CampaignConfig(frames=7), 900) == 7
    # fewer users per frame demand more frames
    assert campaign.frames_for_point(cfg, 90) == math.ceil(34540 / 90)


def test_wilson_interval_edges():
    lo, hi = campaign.wilson_interval(0, 1000)
    assert lo == 0.0 and 0.0 < hi < 0.01
    lo, hi = campaign.wilson_interval(1000, 1000)
    assert hi == 1.0 and 0.99 < lo < 1.0
    assert all(math.isnan(v) for v in campaign.wilson_interval(0, 0))


@settings(max_examples=80, deadline=None)
@given(total=st.integers(1, 10**6), data=st.data())
def test_wilson_interval_contains_point_estimate(total, data):
    losses = data.draw(st.integers(0, total))
    lo, hi = campaign.wilson_interval(losses, total)
    p = losses / total
    assert 0.0 <= lo <= hi <= 1.0
    # the interval covers the point estimate up to floating-point rounding
    assert lo <= p + 1e-12 and p - 1e-12 <= hi


# ---------------------------------------------------------------------------
# configuration parsing and validation


def test_parse_config_text_round_trip():
    cfg = campaign.parse_config_text(
        """
        # comment line
        latency_s = 0.03
        symbol_rate = 1e4   # trailing comment
        antennas = 16
        n_pilots = 8
        payload_symbols = 16
        repetitions = 2
        noise_var = 0.5
        code_n = 31
        code_k = 21
        code_t = 2
        n_extra = 4
        sic = chb
        instantaneous = yes
        k_a = 10, 20 30
        frames = 2
        seed = 5
        workers = 2
        """
    )
    assert cfg.n_slots == 6
    assert cfg.sic == "chb" and cfg.instantaneous is True
    assert cfg.k_a == (10, 20, 30)
    assert cfg.frames == 2 and cfg.seed == 5 and cfg.workers == 2


@pytest.mark.parametrize(
    "text",
    [
        "bogus_key = 1",
        "seed = 1\nseed = 2",
        "just a line without equals",
        "antennas = sixteen",
        "instantaneous = maybe",
        "k_a =",
    ],
)
def test_parse_config_text_rejects(text):
    with pytest.raises(ConfigError):
        campaign.parse_config_text(text)


def test_config_validation_rejects_infeasible():
    with pytest.raises(ConfigError):
        CampaignConfig(latency_s=0.0005)  # latency budget below r slots
    with pytest.raises(ConfigError):
        CampaignConfig(payload_symbols=100)  # does not match the codeword
    with pytest.raises(ConfigError):
        CampaignConfig(protocol="sc_ack", sic="pab", instantaneous=False)
    with pytest.raises(ConfigError):
        CampaignConfig(sic="magic")
    with pytest.raises(ConfigError):
        CampaignConfig(coherence="sometimes")
    with pytest.raises(ConfigError):
        CampaignConfig(noise_var=-0.1)
    with pytest.raises(ConfigError):
        CampaignConfig(target_plr=0.0)
    with pytest.raises(ConfigError):
        CampaignConfig(workers=0)
    with pytest.raises(ConfigError):
        CampaignConfig(k_a=())
    with pytest.raises(ConfigError):
        CampaignConfig(frames=-1)
    with pytest.raises(ConfigError):
        CampaignConfig(**{**SMALL, "n_pilots": 6})  # pilot book needs powers of two
    with pytest.raises(ConfigError):
        CampaignConfig(modulation_order=3)  # not a square constellation
    # the sc_ack restriction applies to the physical receiver only
    CampaignConfig(protocol="sc_ack", sic="logical_sic", instantaneous=False)


def test_apply_overrides():
    cfg = CampaignConfig()
    out = campaign.apply_overrides(cfg, ["sic=chb", "k_a=100 200", "seed=9"])
    assert out.sic == "chb" and out.k_a == (100, 200) and out.seed == 9
    assert cfg.sic == "pab"  # original untouched
    with pytest.raises(ConfigError):
        campaign.apply_overrides(cfg, ["sic"])
    with pytest.raises(ConfigError):
        campaign.apply_overrides(cfg, ["bogus=1"])


# ---------------------------------------------------------------------------
# point execution


def test_worker_partition_invariance():
    r1 = campaign.run_point(CampaignConfig(**SMALL, workers=1), 40, 0)
    r3 = campaign.run_point(CampaignConfig(**SMALL, workers=3), 40, 0)
    for col in campaign.CSV_COLUMNS:
        if col == "wall_s":
            continue
        assert getattr(r1, col) == getattr(r3, col), col


def test_point_matches_direct_frame_loop():
    cfg = CampaignConfig(**SMALL, workers=1)
    res = campaign.run_point(cfg, 40, 0)
    fc = mac.FrameConfig(cfg.n_slots, cfg.n_pilots, cfg.repetitions, 40,
                         cfg.protocol, cfg.coherence)
    book = build_pilot_book(cfg.n_pilots)
    const = square_qam(cfg.modulation_order)
    noise = NoiseSpec(cfg.noise_var)
    lost = attempts = subs = 0
    for f in range(cfg.frames):
        real = build_frame_realization(
            fc, book, const, cfg.code, noise, cfg.antennas, cfg.seed, 0, f
        )
        st_f = run_frame(real, cfg.sic, cfg.instantaneous)
        lost += st_f.lost
        attempts += st_f.attempts
        subs += st_f.subtractions
    assert res.users_total == 40 * cfg.frames
    assert res.users_lost == lost
    assert res.decode_attempts == attempts
    assert res.subtractions == subs
    assert res.plr == pytest.approx(lost / res.users_total)
    assert res.plr_ci_lo <= res.plr <= res.plr_ci_hi
    assert res.sum_rate_bpcu == pytest.approx(campaign.sum_rate(res.plr, 40, cfg))
    assert res.sum_rate_bps == pytest.approx(res.sum_rate_bpcu * cfg.symbol_rate)
    # every frame sweeps all resources at least once
    assert attempts >= cfg.frames * cfg.n_slots * cfg.n_pilots
    assert subs <= cfg.frames * 40 * cfg.repetitions


def test_logical_modes_report_zero_attempts():
    for mode in ("logical_sic", "logical_nosic"):
        cfg = CampaignConfig(sic=mode, k_a=(300,), frames=5, seed=2)
        res = campaign.run_point(cfg, 300, 0)
        assert res.decode_attempts == 0 and res.subtractions == 0
        assert 0.0 <= res.plr <= 1.0
        assert res.sum_rate_bpcu == pytest.approx(campaign.sum_rate(res.plr, 300, cfg))


def test_logical_nosic_tracks_closed_form():
    cfg = CampaignConfig(sic="logical_nosic", k_a=(400,), frames=50, seed=2)
    res = campaign.run_point(cfg, 400, 0)
    closed = plr_no_sic(400, cfg.repetitions, cfg.n_slots, cfg.n_pilots)
    assert res.plr_ci_lo <= closed <= res.plr_ci_hi


def test_logical_sic_dominates_within_protocol():
    # identical allocations per frame in each protocol; peeling must not
    # lose more users than singleton-only decoding
    for protocol in ("baseline", "sc_ack"):
        base = dict(protocol=protocol, k_a=(1200,), frames=8, seed=4)
        nosic = campaign.run_point(CampaignConfig(sic="logical_nosic", **base), 1200, 0)
        sic = campaign.run_point(CampaignConfig(sic="logical_sic", **base), 1200, 0)
        assert sic.users_lost <= nosic.users_lost
        assert nosic.users_lost > 0  # the load is high enough to matter


def test_ack_suppression_bounds_synthesized_replicas():
    # without feedback every placed replica is synthesized; with ACK
    # feedback a user decoded early never transmits its later replicas
    book = build_pilot_book(8)
    const = square_qam(4)
    code = CodeSpec(31, 21, 2, 4)
    noise = NoiseSpec(0.1)
    for seed in (0, 1, 2):
        plain = mac.FrameConfig(6, 8, 2, 20, "baseline", "per_slot")
        real = build_frame_realization(plain, book, const, code, noise, 16, seed, 0, 0)
        st_plain = run_frame(real, "pab", instantaneous=True)
        assert st_plain.synthesized_replicas == 20 * 2
        acked = mac.FrameConfig(6, 8, 2, 20, "sc_ack", "per_slot")
        real = build_frame_realization(acked, book, const, code, noise, 16, seed, 0, 0)
        st_ack = run_frame(real, "pab", instantaneous=True)
        assert st_ack.decoded > 0
        assert st_ack.synthesized_replicas < 20 * 2


def test_sum_rate_has_interior_maximum():
    # throughput grows with load until peeling collapses, so the sweep
    # is not monotone and the best point is interior
    rates = []
    for ka in (1000, 2500, 3500, 4200, 5000):
        cfg = CampaignConfig(sic="logical_sic", k_a=(ka,), frames=20, seed=6)
        rates.append(campaign.run_point(cfg, ka, 0).sum_rate_bpcu)
    best = max(range(len(rates)), key=rates.__getitem__)
    assert 0 < best < len(rates) - 1
    assert rates[-1] < rates[best] and rates[0] < rates[best]


def test_sc_ack_physical_point_runs():
    cfg = CampaignConfig(**{**SMALL, "protocol": "sc_ack"})
    res = campaign.run_point(cfg, 40, 0)
    assert res.users_total == 40 * cfg.frames
    assert 0 <= res.users_lost <= res.users_total
    assert res.subtractions > 0


def test_zero_users_point_is_empty_row():
    cfg = CampaignConfig(**{**SMALL, "k_a": (0,)})
    res = campaign.run_point(cfg, 0, 0)
    assert res.frames == 0 and res.users_total == 0 and res.users_lost == 0
    assert res.plr is None and res.sum_rate_bpcu is None
    row = campaign.results_to_csv([res]).splitlines()[1].split(",")
    cols = dict(zip(campaign.CSV_COLUMNS, row))
    assert cols["plr"] == "" and cols["sum_rate_bpcu"] == "" and cols["plr_ci_hi"] == ""
    assert cols["k_a"] == "0" and cols["frames"] == "0"


def test_results_csv_shape():
    cfg = CampaignConfig(sic="logical_sic", k_a=(0, 50), frames=2, seed=1)
    results = campaign.run_campaign(cfg)
    text = campaign.results_to_csv(results)
    lines = text.splitlines()
    assert lines[0] == ",".join(campaign.CSV_COLUMNS)
    assert len(lines) == 1 + len(results)
    for line in lines[1:]:
        parts = line.split(",")
        assert len(parts) == len(campaign.CSV_COLUMNS)
    cols = dict(zip(campaign.CSV_COLUMNS, lines[2].split(",")))
    assert cols["instantaneous"] == "false"
    assert cols["sic"] == "logical_sic"
    # wall_s is rounded to milliseconds
    assert len(cols["wall_s"].split(".")[1]) == 3


def test_results_json_shape():
    cfg = CampaignConfig(sic="logical_nosic", k_a=(0, 50), frames=2, seed=1)
    rows = json.loads(campaign.results_to_json(campaign.run_campaign(cfg)))
    assert len(rows) == 2
    assert set(rows[0]) == set(campaign.CSV_COLUMNS)
    assert rows[0]["plr"] is None and rows[0]["k_a"] == 0
    assert isinstance(rows[1]["plr"], float)
    assert rows[1]["wall_s"] == round(rows[1]["wall_s"], 3)


def test_run_campaign_progress_order():
    seen = []
    cfg = CampaignConfig(sic="logical_nosic", k_a=(0, 30, 60), frames=2, seed=1)
    results = campaign.run_campaign(cfg, progress=seen.append)
    assert [r.k_a for r in results] == [0, 30, 60]
    assert seen == results


# ---------------------------------------------------------------------------
# command-line driver


def _read(path):
    with open(path) as fh:
        return fh.read()


def test_cli_simulate_matches_library(tmp_path):
    cfg_file = tmp_path / "campaign.cfg"
    cfg_file.write_text(SMALL_TEXT)
    out = tmp_path / "rows.csv"
    rc = cli.main(["simulate", str(cfg_file), "--out", str(out), "--quiet"])
    assert rc == 0
    direct = campaign.results_to_csv(
        campaign.run_campaign(campaign.parse_config_text(SMALL_TEXT))
    )
    got = _read(out)
    # wall clock differs between runs; everything else is reproducible
    strip = lambda text: [  # noqa: E731
        ",".join(line.split(",")[:-1]) for line in text.splitlines()
    ]
    assert strip(got) == strip(direct)


def test_cli_simulate_json_out(tmp_path):
    cfg_file = tmp_path / "campaign.cfg"
    cfg_file.write_text(SMALL_TEXT)
    out = tmp_path / "rows.json"
    assert cli.main(["simulate", str(cfg_file), "--out", str(out), "--quiet"]) == 0
    rows = json.loads(_read(out))
    assert len(rows) == 1 and rows[0]["k_a"] == 40


def test_cli_flag_overrides(tmp_path, capsys):
    cfg_file = tmp_path / "campaign.cfg"
    cfg_file.write_text(SMALL_TEXT)
    rc = cli.main([
        "simulate", str(cfg_file), "--quiet",
        "--set", "frames=2", "--set", "sic=chb", "--k-a", "10,20", "--seed", "9",
    ])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    first = dict(zip(campaign.CSV_COLUMNS, lines[1].split(",")))
    second = dict(zip(campaign.CSV_COLUMNS, lines[2].split(",")))
    assert (first["k_a"], second["k_a"]) == ("10", "20")
    assert first["sic"] == "chb" and first["frames"] == "2"
    direct = campaign.run_point(
        campaign.apply_overrides(
            campaign.parse_config_text(SMALL_TEXT),
            ["frames=2", "sic=chb", "k_a=10 20", "seed=9"],
        ),
        10, 0,
    )
    assert first["users_lost"] == str(direct.users_lost)


def test_cli_bench_logical(tmp_path):
    out = tmp_path / "bench.csv"
    rc = cli.main([
        "bench-logical", "--no-sic", "--k-a", "200", "--seed", "2",
        "--set", "frames=3", "--out", str(out), "--quiet",
    ])
    assert rc == 0
    direct = campaign.run_point(
        CampaignConfig(sic="logical_nosic", k_a=(200,), frames=3, seed=2), 200, 0
    )
    cols = dict(zip(campaign.CSV_COLUMNS, _read(out).splitlines()[1].split(",")))
    assert cols["sic"] == "logical_nosic"
    assert cols["users_lost"] == str(direct.users_lost)
    # the flag wins even when the config asked for a physical receiver
    rc = cli.main([
        "bench-logical", "--k-a", "50", "--seed", "1", "--set", "frames=1",
        "--set", "sic=pab", "--out", str(out), "--quiet",
    ])
    assert rc == 0
    assert ",logical_sic," in _read(out).splitlines()[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "/nonexistent/campaign.cfg"],
        ["simulate", "--set", "bogus=1"],
        ["simulate", "--set", "frames"],
        ["simulate", "--k-a", "abc"],
        ["simulate", "--k-a", "9:1"],
        ["simulate", "--k-a", "1:2:3:4"],
        ["simulate", "--set", "sic=magic"],
        ["bench-logical", "--set", "latency_s=0.0001"],
        ["fixture", "/nonexistent/alloc.txt"],
    ],
)
def test_cli_config_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_duplicate_key_exit_2(tmp_path, capsys):
    cfg_file = tmp_path / "campaign.cfg"
    cfg_file.write_text("seed = 1\nseed = 2\n")
    assert cli.main(["simulate", str(cfg_file)]) == 2
    assert "duplicate" in capsys.readouterr().err


def test_cli_numerical_error_exit_3(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NumericalError("quadrature failed to converge")

    monkeypatch.setattr(cli, "p_fail", boom)
    rc = cli.main(["analytic", "--curve", "p-fail", "--co-pilot", "1",
                   "--slot-users", "4"])
    assert rc == 3
    assert "numerical error" in capsys.readouterr().err


def test_cli_analytic_plr_no_sic(capsys):
    rc = cli.main(["analytic", "--curve", "plr-no-sic", "--k-a", "180,500"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "k_a,n_slots,n_pilots,repetitions,plr_no_sic"
    for line, k_a in zip(lines[1:], (180, 500)):
        parts = line.split(",")
        assert parts[0] == str(k_a)
        assert float(parts[4]) == pytest.approx(plr_no_sic(k_a, 3, 78, 64), rel=1e-9)


def test_cli_analytic_p_fail_grid(capsys):
    rc = cli.main([
        "analytic", "--curve", "p-fail", "--co-pilot", "1", "--slot-users", "4,8",
        "--noise-var", "1.0", "--n-pilots", "8", "--antennas", "64",
        "--payload-symbols", "16", "--code-t", "2",
    ])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("co_pilot_users,slot_users,")
    vals = [float(line.split(",")[-1]) for line in lines[1:]]
    assert len(vals) == 2
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert vals[0] < vals[1]  # failure grows with slot occupancy


def test_cli_analytic_default_grid_spans_waterfall(capsys):
    rc = cli.main([
        "analytic", "--curve", "p-fail", "--co-pilot", "1",
        "--noise-var", "1.0", "--n-pilots", "8", "--antennas", "64",
        "--payload-symbols", "16", "--code-t", "2",
    ])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()[1:]
    vals = [float(line.split(",")[-1]) for line in lines]
    assert vals == sorted(vals)
    assert vals[0] < 0.5 < vals[-1]


def test_cli_fixture_matches_library(tmp_path, capsys):
    alloc_path = "tests/data/peeling_showcase.txt"
    rc = cli.main(["fixture", alloc_path])
    assert rc == 0
    out = capsys.readouterr().out
    pairs = mac.parse_allocation(_read(alloc_path))
    g = logicalbench.ResourceGraph(pairs)
    order, waves = logicalbench.peel_with_sic(g)
    no_sic = logicalbench.decode_no_sic(g)
    assert f"users: {len(pairs)}" in out
    assert "sic_order: " + " ".join(str(u) for u in order) in out
    assert f"sic_decoded: {len(order)}/{len(pairs)}" in out
    for i, wave in enumerate(waves, start=1):
        assert f"wave {i}: " + " ".join(str(u) for u in wave) in out
    assert "no_sic_decoded: " + " ".join(str(u) for u in sorted(no_sic)) in out


def test_parse_int_list():
    assert cli._parse_int_list("100,300,650") == [100, 300, 650]
    assert cli._parse_int_list("100:102") == [100, 101, 102]
    assert cli._parse_int_list("100:700:300") == [100, 400, 700]
    assert cli._parse_int_list("5, 10:12") == [5, 10, 11, 12]
    for bad in ("", "a", "5:1", "1:2:0", "1:2:3:4"):
        with pytest.raises(ConfigError):
            cli._parse_int_list(bad)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 5000), min_size=1, max_size=8))
def test_parse_int_list_round_trips_plain_lists(values):
    assert cli._parse_int_list(",".join(str(v) for v in values)) == values
