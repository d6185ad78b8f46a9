#!/usr/bin/env python3
"""Sample plotting script for swiptbeam experiment output.

Not a supported component: the CSV files are the contract. Reads an
aggregate.csv produced by `swiptbeam run` and plots mean objective vs the
sweep value per algorithm, with 95% confidence whiskers.

Usage:
    python3 docs/plot_results.py results/aggregate.csv out.png
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main() -> None:
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    agg = pd.read_csv(sys.argv[1], comment="#")
    fig, ax = plt.subplots(figsize=(6, 4))
    for alg, group in agg.groupby("algorithm"):
        group = group.sort_values("value")
        ax.errorbar(
            group["value"],
            group["mean_objective"],
            yerr=group["ci95_half_width"],
            marker="o",
            capsize=3,
            label=alg,
        )
    ax.set_xlabel(agg["axis"].iloc[0])
    ylabel = "worst-user rate (bits/s/Hz)"
    if agg["algorithm"].str.contains("-ee").any():
        ylabel = "energy efficiency (bits/s/Hz per W)"
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=150)
    print(f"wrote {sys.argv[2]}")


if __name__ == "__main__":
    main()
