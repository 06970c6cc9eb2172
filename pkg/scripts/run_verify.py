"""Run the numerical certification battery and exit nonzero on any failure."""

import argparse
import sys
from pathlib import Path

from uotsd.experiments import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.strip())
    ap.add_argument("--output", type=Path, default=Path("runs"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    summary, passed = run_experiment({"experiment": "verify",
                                      "seed": args.seed}, args.output)
    for check in summary["checks"]:
        tag = "PASS" if check["passed"] else "FAIL"
        print(f"[{tag}] {check['name']}: measured={check['measured']:.6g} "
              f"tol={check['tolerance']:.6g}")
    sys.exit(0 if passed else 1)


if __name__ == "__main__":
    main()
