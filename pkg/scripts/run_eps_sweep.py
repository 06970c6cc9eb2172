"""Sweep the entropic regularization and compare gap vs parameter error."""

import argparse
import json
from pathlib import Path

from uotsd.experiments import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.strip())
    ap.add_argument("--output", type=Path, default=Path("runs"))
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.01, 0.001])
    args = ap.parse_args()

    summary, _ = run_experiment({"experiment": "eps_sweep",
                                 "eps_list": args.eps}, args.output)
    keys = ("gap_increases_as_eps_decreases", "gap_spread_ratio",
            "param_error_spread_ratio", "param_spread_below_gap_spread")
    print(json.dumps({k: summary[k] for k in keys}, indent=2))


if __name__ == "__main__":
    main()
