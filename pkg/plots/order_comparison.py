"""Compare sketch orders (or algorithms) as shaded mean +/- std bands.

Usage: python plots/order_comparison.py results.csv out.png

Groups rows by the (algorithm, order) tag and draws one band per tag
against sample size; axes are log-log as in the error-vs-N figure.
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


def band_data(frame):
    err_col = "err" if frame["err"].notna().any() else "err_t"
    rows = frame[frame[err_col].notna()].copy()
    rows["tag"] = rows["algorithm"].astype(str) + " order=" + rows["order"].astype(str)
    sweep_col = "N" if rows["N"].nunique() > 1 else "d"
    if rows[sweep_col].nunique() < 2:
        raise SchemaError("need a sweep over N or d to compare tags")
    bands = {}
    for tag, part in rows.groupby("tag"):
        grouped = part.groupby(sweep_col)[err_col]
        xs = np.array(sorted(grouped.groups))
        bands[tag] = (xs, grouped.mean().loc[xs].to_numpy(),
                      grouped.std(ddof=0).fillna(0.0).loc[xs].to_numpy())
    return sweep_col, bands


def render(csv_path, out_path) -> None:
    sweep_col, bands = band_data(load_results(csv_path))
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for tag, (xs, means, stds) in sorted(bands.items()):
        line, = ax.plot(xs, means, "-", label=tag)
        ax.fill_between(xs, means - stds, means + stds, alpha=0.3,
                        color=line.get_color())
    if sweep_col == "N":
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("sample size N" if sweep_col == "N" else "dimension d")
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
