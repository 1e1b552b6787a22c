#!/usr/bin/env python3
"""Plot convergence CSVs produced by `riccati-mor run` (developer tooling).

Usage:
    python tools/plot_convergence.py results/test1 [-o figure.png]

Draws residual, gain-error, and transfer-error panels over the reduced
order for every method CSV found in the directory.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANELS = [("R_P", "relative Riccati residual"),
          ("E_K", "feedback gain error"),
          ("E_G", "transfer function error")]


def load(path):
    rows = {"r": [], "R_P": [], "E_K": [], "E_G": []}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows["r"].append(int(rec["r"]))
            for key in ("R_P", "E_K", "E_G"):
                rows[key].append(float(rec[key]) if rec[key] else None)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("directory", type=Path)
    parser.add_argument("-o", "--output", type=Path, default=None)
    args = parser.parse_args()

    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    for csv_path in sorted(args.directory.glob("*.csv")):
        if csv_path.name == "scaling.csv":
            continue
        data = load(csv_path)
        label = csv_path.stem
        for ax, (key, title) in zip(axes, PANELS):
            pairs = [(r, v) for r, v in zip(data["r"], data[key]) if v]
            if pairs:
                ax.semilogy(*zip(*pairs), marker="o", label=label)
            ax.set_title(title)
            ax.set_xlabel("reduced order r")
            ax.grid(True, which="both", alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    out = args.output or args.directory / "convergence.png"
    fig.savefig(out, dpi=150)
    print("wrote", out)


if __name__ == "__main__":
    main()
