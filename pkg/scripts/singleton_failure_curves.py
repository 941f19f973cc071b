#!/usr/bin/env python3
"""Singleton decode-failure probability: closed form vs Monte Carlo.

For each (noise variance, co-pilot user count) pair, places a grid of
slot occupancies across the waterfall of the analytic curve and runs the
conditional Monte Carlo experiment at each point, emitting both values
per row.

Example:
    python3 scripts/singleton_failure_curves.py --noise-var 1,10 \
        --co-pilot 1,2,3 --trials 30000 --out pfail.csv
"""

import argparse
import sys

from csa_mimo.analytics import InterferenceScenario, QamErrorParams, p_fail
from csa_mimo.experiments import singleton_failure_mc, singleton_failure_sweep
from csa_mimo.signalcore import CodeSpec, square_qam


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise-var", default="1,10")
    ap.add_argument("--co-pilot", default="1,2,3")
    ap.add_argument("--trials", type=int, default=30000)
    ap.add_argument("--points", type=int, default=6)
    ap.add_argument("--antennas", type=int, default=256)
    ap.add_argument("--n-pilots", type=int, default=64)
    ap.add_argument("--code", default="511,421,10", help="n,k,t of the payload code")
    ap.add_argument("--order", type=int, default=4, help="QAM order")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    n, k, t = (int(v) for v in args.code.split(","))
    code = CodeSpec(n, k, t)
    const = square_qam(args.order)
    n_payload = -(-code.n // const.bits_per_symbol)
    q = QamErrorParams(args.order)

    lines = ["noise_var,co_pilot_users,slot_users,p_fail_analytic,p_fail_mc,trials"]
    for s2 in (float(v) for v in args.noise_var.split(",")):
        for aj in (int(v) for v in args.co_pilot.split(",")):
            grid = singleton_failure_sweep(
                aj, s2, args.n_pilots, args.antennas, n_payload, t,
                order=args.order, max_points=args.points,
            )
            for n_a in grid.tolist():
                scen = InterferenceScenario(
                    n_slot_users=n_a, n_pilot_users=aj, noise_var=s2,
                    n_pilots=args.n_pilots, antennas=args.antennas,
                )
                ana = p_fail(scen, n_payload, t, q)
                mc = singleton_failure_mc(
                    n_a, aj, s2, args.n_pilots, args.antennas, code, const,
                    args.trials, seed=args.seed,
                )
                print(f"s2={s2} aj={aj} A={n_a}: mc={mc:.4g} analytic={ana:.4g}",
                      file=sys.stderr)
                lines.append(f"{s2:.10g},{aj},{n_a},{ana:.10g},{mc:.10g},{args.trials}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
