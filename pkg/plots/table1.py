"""Render the continuous-fit error table (basis size versus the three
L2 error components, one column group per dimension) as plain text.

Usage: python plots/table1.py results.csv out.txt
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from results_frame import SchemaError, load_results


def render_text(frame) -> str:
    rows = frame[frame["err_t"].notna()].copy()
    if len(rows) == 0:
        raise SchemaError("no continuous-error rows (err_a/err_e/err_t) in the CSV")
    rows["M"] = rows["M"].astype(int)
    ds = sorted(rows["d"].astype(int).unique())
    ms = sorted(rows["M"].unique())
    header = ["M"]
    for d in ds:
        header += [f"err_a(d={d})", f"err_e(d={d})", f"err_t(d={d})"]
    lines = []
    for m in ms:
        cells = [str(m)]
        for d in ds:
            part = rows[(rows["M"] == m) & (rows["d"] == d)]
            if len(part) == 0:
                cells += ["-", "-", "-"]
                continue
            err_a = part["err_a"].mean()
            err_e, err_e_std = part["err_e"].mean(), part["err_e"].std(ddof=0)
            err_t = part["err_t"].mean()
            cells += [f"{err_a:.4f}", f"{err_e:.4f} ({err_e_std:.4f})", f"{err_t:.4f}"]
        lines.append(cells)
    widths = [max(len(header[j]), *(len(row[j]) for row in lines)) for j in range(len(header))]
    def fmt(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(header), sep] + [fmt(row) for row in lines]) + "\n"


def main(argv) -> int:
    if len(argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    try:
        text = render_text(load_results(argv[0]))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    Path(argv[1]).write_text(text)
    print(argv[1])
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
