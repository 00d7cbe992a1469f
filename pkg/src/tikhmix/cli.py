"""Command-line entry point: ``tikhmix-sim [--config FILE] [--key value ...]``.

Every config-file key has a flag of the same name (underscores become dashes).
Flags win over the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from .sim import SimConfig, parse_config_text, run

HELP = {
    "mod_order": "constellation size M (MPSK)",
    "sigma_delta": "phase-noise increment std [rad]",
    "ebn0": "comma-separated Eb/N0 points [dB]",
    "pilot_period": "one pilot every this many symbols (0 = none)",
    "preamble": "number of leading pilot symbols",
    "algo": "comma-separated detectors: unlimited, limited[:L], select[:L], dp[:Q], barb",
    "max_order": "order cap for bare limited/select",
    "epsilon": "KL threshold of the reduction",
    "kl_mode": "exact, approx or coarse",
    "strategy": "cmvm or select (unlimited/limited)",
    "outer_iters": "detector/decoder iterations",
    "packets": "packets per SNR point",
    "seed": "base seed",
    "code": "fixture key (small, highrate), shipped alist name or path",
    "out": "output directory for CSV files",
    "instrument": "record operation counts (counts.csv)",
    "oracle_check": "compare first-iteration Pu against a fine DP grid",
    "oracle_q": "DP oracle levels between constellation points",
    "early_stop": "stop outer iterations once the decoder converges",
    "extrinsic": "feed back extrinsic (not full posterior) decoder output",
    "bp_iters": "belief-propagation iterations per decode",
    "workers": "parallel worker processes",
    "plot": "also render PNG figures into --out",
}


def build_parser():
    p = argparse.ArgumentParser(prog="tikhmix-sim", description="Phase-noise tracking simulation")
    p.add_argument("--config", help="flat key = value config file")
    for f in fields(SimConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            p.add_argument(flag, nargs="?", const="true", default=None, metavar="BOOL",
                           help=HELP.get(f.name))
        else:
            p.add_argument(flag, default=None, help=HELP.get(f.name))
    return p


def config_from_args(argv=None) -> SimConfig:
    args = vars(build_parser().parse_args(argv))
    data = {}
    path = args.pop("config")
    if path:
        with open(path) as fh:
            data.update(parse_config_text(fh.read()))
        data = {k.replace("-", "_"): v for k, v in data.items()}
    data.update({k: v for k, v in args.items() if v is not None})
    return SimConfig.from_mapping(data)


def main(argv=None):
    try:
        cfg = config_from_args(argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.plot and not cfg.out:
        print("error: --plot needs --out", file=sys.stderr)
        return 2
    res = run(cfg)
    cols = ("algo", "ebn0_db", "packets", "ber", "per", "per_ci")
    print(",".join(cols))
    for r in res.rows:
        print(",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
    print(f"# wall time {res.wall_time:.1f} s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
