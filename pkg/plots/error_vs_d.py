"""Render the error-versus-dimension figure from a results CSV.

Usage: python plots/error_vs_d.py results.csv out.png
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


def aggregate(frame):
    err_col = "err" if frame["err"].notna().any() else "err_t"
    rows = frame[frame[err_col].notna()]
    if rows["d"].nunique() < 2:
        raise SchemaError("need at least two dimensions for an error-vs-d plot")
    grouped = rows.groupby("d")[err_col]
    ds = np.array(sorted(grouped.groups))
    means = grouped.mean().loc[ds].to_numpy()
    stds = grouped.std(ddof=0).fillna(0.0).loc[ds].to_numpy()
    return ds, means, stds


def render(csv_path, out_path) -> None:
    ds, means, stds = aggregate(load_results(csv_path))
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.errorbar(ds, means, yerr=stds, fmt="s-", capsize=3, label="relative error")
    coeffs = np.polyfit(ds, means, 1)
    ax.plot(ds, np.polyval(coeffs, ds), "k--", alpha=0.6, label="linear fit")
    ax.set_xlabel("dimension d")
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
