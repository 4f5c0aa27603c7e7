"""Render the error-versus-sample-size figure from a results CSV.

Usage: python plots/error_vs_n.py results.csv out.png

Log-log axes, one error bar (mean +/- std over trials) per sample size,
and a reference guide line of slope -1/2 anchored at the first point.
"""

from __future__ import annotations

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))
from results_frame import SchemaError, load_results

GUIDE_SLOPE = -0.5


def aggregate(frame):
    err_col = "err" if frame["err"].notna().any() else "err_t"
    rows = frame[frame[err_col].notna()]
    if rows["N"].nunique() < 2:
        raise SchemaError("need at least two sample sizes for an error-vs-N plot")
    grouped = rows.groupby("N")[err_col]
    ns = np.array(sorted(grouped.groups))
    means = grouped.mean().loc[ns].to_numpy()
    stds = grouped.std(ddof=0).fillna(0.0).loc[ns].to_numpy()
    return ns, means, stds


def render(csv_path, out_path) -> None:
    ns, means, stds = aggregate(load_results(csv_path))
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.errorbar(ns, means, yerr=stds, fmt="o-", capsize=3, label="relative error")
    guide = means[0] * (ns / ns[0]) ** GUIDE_SLOPE
    ax.plot(ns, guide, "k--", alpha=0.6, label=r"$N^{-1/2}$ guide")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sample size N")
    ax.set_ylabel("relative $\\ell^2$ error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def main(argv) -> int:
    if len(argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    try:
        render(argv[0], argv[1])
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(argv[1])
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
