#!/usr/bin/env python3
"""Packet loss rate vs number of active users for several receiver modes.

Runs the same seeded campaign for each requested mode so the per-frame
realizations are paired, then concatenates the per-point rows into one
CSV (the sic column distinguishes the curves).

Example:
    python3 scripts/plr_vs_active_users.py --k-a 300:700:100 \
        --modes chb,pab,prce --frames 50 --workers 4 --out plr.csv
"""

import argparse
import sys

from csa_mimo import campaign
from csa_mimo.cli import _parse_int_list


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="base key=value config file")
    ap.add_argument("--modes", default="chb,pab,prce,logical_sic,logical_nosic")
    ap.add_argument("--k-a", dest="k_a", default="300:700:100")
    ap.add_argument("--frames", type=int, default=0, help="0 selects the CI-based default")
    ap.add_argument("--instantaneous", action="store_true")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    if args.config is not None:
        with open(args.config) as fh:
            base = campaign.parse_config_text(fh.read())
    else:
        base = campaign.CampaignConfig()
    shared = [
        "k_a=" + " ".join(str(k) for k in _parse_int_list(args.k_a)),
        f"frames={args.frames}",
        f"seed={args.seed}",
        f"workers={args.workers}",
        f"instantaneous={'true' if args.instantaneous else 'false'}",
    ]
    all_results = []
    for mode in args.modes.split(","):
        cfg = campaign.apply_overrides(base, shared + [f"sic={mode.strip()}"])
        for res in campaign.run_campaign(cfg):
            print(
                f"sic={res.sic} k_a={res.k_a} plr={res.plr} wall={res.wall_s:.1f}s",
                file=sys.stderr,
            )
            all_results.append(res)
    text = campaign.results_to_csv(all_results)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
