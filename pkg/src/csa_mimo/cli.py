"""Command-line entry point.

Sub-commands:

- ``simulate``: run a user-count sweep campaign from a flat key=value
  config file, emitting per-point loss rate, confidence interval and sum
  rate as CSV or JSON.
- ``analytic``: emit closed-form curves (singleton decode-failure
  probability vs slot occupancy, or the no-SIC packet loss rate vs the
  number of active users) as CSV.
- ``bench-logical``: the same sweep driver restricted to the
  collision-channel benchmarks.
- ``fixture``: decode a dumped allocation file with the collision-channel
  benchmarks and print waves, order and decoded sets.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
failures inside the closed-form evaluations.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import campaign, logicalbench, mac
from .analytics import (
    InterferenceScenario,
    NumericalError,
    QamErrorParams,
    p_fail,
    plr_no_sic,
)


def _parse_int_list(text: str) -> list[int]:
    """Accept '100,300,650' and inclusive ranges '100:700:50' (mixable by comma)."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ":" in part:
                pieces = part.split(":")
                if len(pieces) not in (2, 3):
                    raise campaign.ConfigError(
                        f"bad range {part!r}, expected start:stop[:step]"
                    )
                start, stop = int(pieces[0]), int(pieces[1])
                step = int(pieces[2]) if len(pieces) == 3 else 1
                if step < 1 or stop < start:
                    raise campaign.ConfigError(f"bad range {part!r}")
                out.extend(range(start, stop + 1, step))
            else:
                out.append(int(part))
        except ValueError as e:
            raise campaign.ConfigError(f"bad integer list entry {part!r}") from e
    if not out:
        raise campaign.ConfigError(f"empty integer list {text!r}")
    return out


def _write_out(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _load_campaign_config(args) -> campaign.CampaignConfig:
    if args.config is not None:
        try:
            with open(args.config) as fh:
                cfg = campaign.parse_config_text(fh.read())
        except OSError as e:
            raise campaign.ConfigError(f"cannot read config file: {e}") from e
    else:
        cfg = campaign.CampaignConfig()
    overrides = list(args.set or [])
    if getattr(args, "k_a", None):
        overrides.append("k_a=" + " ".join(str(k) for k in _parse_int_list(args.k_a)))
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    return campaign.apply_overrides(cfg, overrides)


def _emit_results(results, out: Optional[str]) -> None:
    if out is not None and out.endswith(".json"):
        _write_out(campaign.results_to_json(results), out)
    else:
        _write_out(campaign.results_to_csv(results), out)


def _progress(res: campaign.PointResult) -> None:
    plr = "n/a" if res.plr is None else f"{res.plr:.3g}"
    print(
        f"k_a={res.k_a} sic={res.sic} frames={res.frames} plr={plr} wall={res.wall_s:.1f}s",
        file=sys.stderr,
    )


def _cmd_simulate(args) -> int:
    cfg = _load_campaign_config(args)
    results = campaign.run_campaign(cfg, progress=_progress if not args.quiet else None)
    _emit_results(results, args.out)
    return 0


def _cmd_bench_logical(args) -> int:
    cfg = _load_campaign_config(args)
    mode = "logical_nosic" if args.no_sic else "logical_sic"
    cfg = campaign.apply_overrides(cfg, [f"sic={mode}"])
    results = campaign.run_campaign(cfg, progress=_progress if not args.quiet else None)
    _emit_results(results, args.out)
    return 0


def _cmd_analytic(args) -> int:
    lines: list[str] = []
    if args.curve == "p-fail":
        co_pilots = _parse_int_list(args.co_pilot)
        lines.append(
            "co_pilot_users,slot_users,noise_var,n_pilots,antennas,"
            "payload_symbols,code_t,modulation_order,p_fail"
        )
        q = QamErrorParams(args.order)
        for aj in co_pilots:
            if args.slot_users is not None:
                grid = _parse_int_list(args.slot_users)
            else:
                from .experiments import singleton_failure_sweep

                grid = singleton_failure_sweep(
                    aj, args.noise_var, args.n_pilots, args.antennas,
                    args.payload_symbols, args.code_t, order=args.order,
                ).tolist()
            for n_a in grid:
                s = InterferenceScenario(
                    n_slot_users=n_a, n_pilot_users=aj, noise_var=args.noise_var,
                    n_pilots=args.n_pilots, antennas=args.antennas,
                )
                p = p_fail(s, args.payload_symbols, args.code_t, q)
                lines.append(
                    f"{aj},{n_a},{args.noise_var:.10g},{args.n_pilots},{args.antennas},"
                    f"{args.payload_symbols},{args.code_t},{args.order},{p:.10g}"
                )
    else:  # plr-no-sic
        lines.append("k_a,n_slots,n_pilots,repetitions,plr_no_sic")
        for k_a in _parse_int_list(args.k_a):
            p = plr_no_sic(k_a, args.repetitions, args.n_slots, args.n_pilots)
            lines.append(f"{k_a},{args.n_slots},{args.n_pilots},{args.repetitions},{p:.10g}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_fixture(args) -> int:
    try:
        with open(args.allocation) as fh:
            text = fh.read()
    except OSError as e:
        raise campaign.ConfigError(f"cannot read allocation file: {e}") from e
    try:
        pairs = mac.parse_allocation(text)
    except ValueError as e:
        raise campaign.ConfigError(str(e)) from e
    g = logicalbench.ResourceGraph(pairs)
    order, waves = logicalbench.peel_with_sic(g)
    no_sic = logicalbench.decode_no_sic(g)
    lines = [f"users: {len(pairs)}", f"resources: {len(g.resource_users)}"]
    for i, wave in enumerate(waves, start=1):
        lines.append(f"wave {i}: " + " ".join(str(u) for u in wave))
    lines.append("sic_order: " + " ".join(str(u) for u in order))
    lines.append(f"sic_decoded: {len(order)}/{len(pairs)}")
    undecoded = sorted(set(pairs) - set(order))
    lines.append("sic_undecoded: " + (" ".join(str(u) for u in undecoded) or "-"))
    lines.append("no_sic_decoded: " + (" ".join(str(u) for u in sorted(no_sic)) or "-"))
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _add_campaign_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("config", nargs="?", default=None, help="flat key=value config file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config key (repeatable)")
    sp.add_argument("--k-a", dest="k_a", default=None,
                    help="active-user sweep, e.g. 100,300 or 100:700:50")
    sp.add_argument("--seed", type=int, default=None, help="master seed")
    sp.add_argument("--workers", type=int, default=None, help="worker process count")
    sp.add_argument("--out", default=None, help="output path (.json selects JSON)")
    sp.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csa-mimo",
        description="Coded slotted ALOHA with a large-array receiver: "
                    "simulation campaigns and closed-form curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run a sweep campaign")
    _add_campaign_args(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("analytic", help="emit closed-form curves as CSV")
    sp.add_argument("--curve", choices=("p-fail", "plr-no-sic"), default="p-fail")
    sp.add_argument("--co-pilot", default="1,2,3",
                    help="co-pilot user counts for p-fail curves")
    sp.add_argument("--slot-users", default=None,
                    help="slot occupancy grid; default spans the waterfall")
    sp.add_argument("--noise-var", type=float, default=1.0)
    sp.add_argument("--n-pilots", type=int, default=64)
    sp.add_argument("--antennas", type=int, default=256)
    sp.add_argument("--payload-symbols", type=int, default=256)
    sp.add_argument("--code-t", type=int, default=10)
    sp.add_argument("--order", type=int, default=4, help="QAM order")
    sp.add_argument("--k-a", dest="k_a", default="60:700:40",
                    help="active-user grid for plr-no-sic")
    sp.add_argument("--n-slots", type=int, default=78)
    sp.add_argument("--repetitions", type=int, default=3)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_analytic)

    sp = sub.add_parser("bench-logical", help="collision-channel benchmark sweep")
    _add_campaign_args(sp)
    sp.add_argument("--no-sic", action="store_true",
                    help="benchmark without interference cancellation")
    sp.set_defaults(func=_cmd_bench_logical)

    sp = sub.add_parser("fixture", help="decode a dumped allocation file")
    sp.add_argument("allocation", help="allocation dump (one 'user: (slot,pilot) ...' per line)")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_fixture)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except campaign.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
