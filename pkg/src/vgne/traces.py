"""CSV trace output shared by the solvers and the experiment runner."""

import csv
import io
from pathlib import Path

FULL_HEADER = ("iter", "residual", "lyapunov")
ROUND_HEADER = ("round", "V", "consensus_sigma", "consensus_lambda", "consensus_r",
                "kkt_residual")
TRACKING_HEADER = ("t", "tracking_error_P", "tracking_error_Q", "bound",
                   "constraint_violation")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return "%.17g" % float(v)


def format_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(header, rows))
    return path


def read_csv(path):
    """Rows as dicts of floats (``None`` for empty cells)."""
    with open(path, newline="") as fh:
        return [
            {k: (float(v) if v != "" else None) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
