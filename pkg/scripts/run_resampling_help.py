"""Run exp_resampling_help and write its JSON and CSV record into an output directory."""
import argparse
import sys

from approxmcmc.experiments import MISMATCH, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="out/exp_resampling_help")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    result, paths = run_experiment("exp_resampling_help", args.out, seed=args.seed)
    for c in result.checks:
        print(f"{c.name}: {'ok' if c.passed else 'FAIL'} ({c.lhs:.4g} vs {c.rhs:.4g})")
    print(f"verdict: {result.verdict}; wrote {', '.join(paths)}")
    return 3 if result.verdict == MISMATCH else 0


if __name__ == "__main__":
    sys.exit(main())
