"""Tradeoff sweep on the conjugate model with N = 1e5 two-valued data and M = 1e4."""
import argparse
import json
import sys

from approxmcmc.cli import main as cli_main

CONFIG = {
    "model": {"kind": "gaussian", "prior_sd": 1.0},
    "data": {"two_point": {"N": 100_000, "values": [-1.0, 1.0]}},
    "test_function": {"kind": "square_clipped"},
    "tradeoff": {"M": 10_000, "n_list": [8, 16, 32, 48, 64, 128, 256, 512, 1024],
                 "reps": 200, "x0": 1.0, "G": 200},
}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="out/tradeoff")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    return cli_main(["tradeoff", "--config", json.dumps(CONFIG), "--out", args.out, "--seed", str(args.seed)])


if __name__ == "__main__":
    sys.exit(main())
