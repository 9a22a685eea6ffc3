"""CSV and gnuplot emission for sweep records."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from pathlib import Path

COLUMNS = (
    "detector",
    "q",
    "alpha",
    "p_attack",
    "t",
    "pe_emp",
    "pe_ci",
    "pd_emp",
    "pf_emp",
    "pe_analytic",
    "pd_analytic",
    "pf_analytic",
    "x_hat_mean",
    "p_hat_mean",
    "n_reference",
    "filter_tau",
    "error",
)
_TEXT = {"detector", "error"}
_INT = {"q", "t", "n_reference"}


class OutputError(OSError):
    pass


def format_number(v) -> str:
    """Six significant digits; NaN prints as ``nan``."""
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return f"{v:.6g}"


def _row(rec, columns):
    d = rec if isinstance(rec, dict) else dataclasses.asdict(rec)
    out = []
    for c in columns:
        v = d[c]
        out.append(v if c in _TEXT else str(int(v)) if c in _INT else format_number(float(v)))
    return out


def render_csv(records, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow(_row(r, columns))
    return buf.getvalue()


def emit_csv(records, path, columns=COLUMNS) -> Path:
    """Header plus one line per record; identical records give identical bytes."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_csv(records, columns))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> list:
    """Parse an emitted file back into dicts with numeric fields converted."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k in _INT:
                r[k] = int(v)
            elif k not in _TEXT:
                r[k] = float(v)
    return rows


def emit_gnuplot(records, csv_path, script_path, x_column="p_attack", y_column="pe_emp", title="") -> Path:
    """Write a gnuplot script drawing one curve per (detector, q, tau, N_ref) series from the CSV."""
    csv_path = Path(csv_path)
    col = {c: i + 1 for i, c in enumerate(COLUMNS)}
    series = []
    for r in records:
        key = (r.detector, r.q, r.filter_tau, r.n_reference)
        if key not in series:
            series.append(key)
    plots = []
    for det, q, tau, n_ref in series:
        cond = (
            f'(strcol({col["detector"]}) eq "{det}" && ${col["q"]} == {q} && '
            f'abs(${col["filter_tau"]} - {tau:g}) < 1e-9 && ${col["n_reference"]} == {n_ref})'
        )
        plots.append(f"'{csv_path.name}' using {col[x_column]}:({cond} ? ${col[y_column]} : 1/0) with linespoints title '{det} q={q} tau={tau:g} Nref={n_ref}'")
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        f"set xlabel '{x_column}'",
        f"set ylabel '{y_column}'",
        "set key outside",
        "plot " + ", \\\n     ".join(plots) if plots else "# no records",
        "",
    ]
    script_path = Path(script_path)
    try:
        script_path.write_text("\n".join(lines))
    except OSError as exc:
        raise OutputError(f"cannot write {script_path}: {exc}") from exc
    return script_path
