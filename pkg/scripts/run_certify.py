"""Certificates for the subsampled wide-tail kernel against its exact counterpart."""
import argparse
import json
import math
import sys

from approxmcmc.cli import main as cli_main


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--N", type=int, default=80_000)
    p.add_argument("--G", type=int, default=400)
    p.add_argument("--out", default="out/certify")
    args = p.parse_args()
    A = max(1, math.ceil(args.n * math.log(args.n)))  # 4 C^2 n log n with clip C = 1/2
    cfg = {
        "model": {"kind": "bounded", "prior_sd": 1.0, "clip": 0.5},
        "data": {"two_point": {"N": args.N}},
        "kernel": {"kind": "WideMH", "n": args.n},
        "approx_kernel": {"kind": "SubsampleWide", "n": args.n, "A": A},
        "grid": {"G": args.G},
    }
    return cli_main(["certify", "--config", json.dumps(cfg), "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
