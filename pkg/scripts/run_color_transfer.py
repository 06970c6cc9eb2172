"""Recolor a source image with the palette of a target image.

One output PNG per rho; small rho keeps more of the source look (less mass
is forced to transport), large rho pushes colors toward the target palette.
"""

import argparse
from pathlib import Path

from uotsd.experiments import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", type=Path, help="source PNG (recolored)")
    ap.add_argument("target", type=Path, help="target PNG (palette donor)")
    ap.add_argument("--output", type=Path, default=Path("runs"))
    ap.add_argument("--rhos", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    args = ap.parse_args()

    summary, _ = run_experiment({
        "experiment": "color_transfer",
        "source_image": str(args.source),
        "target_image": str(args.target),
        "rhos": args.rhos,
    }, args.output)

    for rho, entry in summary["by_rho"].items():
        print(f"rho={rho}: mass fraction {entry['mass_fraction']:.4f} "
              f"-> {args.output / entry['recolored']}")


if __name__ == "__main__":
    main()
