"""
CSV, SVG and text output.

All numbers are written with ``settings.float_digits`` significant digits so
identical inputs give byte-identical files.
"""
import csv
import glob
import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from config.settings import settings  # noqa: E402
from models.problem import DerivedConstants, ValidationReport  # noqa: E402
from models.reports import EstimateReport  # noqa: E402
from models.run import SERIES_COLUMNS, RunResult  # noqa: E402
from services.grid import Grid1D  # noqa: E402

logger = logging.getLogger(__name__)

AUDIT_COLUMNS = ("check", "kind", "bound", "observed", "margin", "pass")


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, f".{settings.float_digits}g")
    if value is None:
        return ""
    try:
        return format(float(value), f".{settings.float_digits}g")
    except (TypeError, ValueError):
        return str(value)


def eps_tag(eps: float) -> str:
    return format(eps, ".6g")


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_snapshots(path: str, result: RunResult, grid: Grid1D) -> None:
    x = grid.centers
    rows = ((s.t, x[i], s.u[i], s.w[i]) for s in result.snapshots for i in range(grid.n))
    write_csv(path, ("t", "x", "u", "w"), rows)


def write_series(path: str, result: RunResult) -> None:
    series = result.series
    rows = (tuple(series[c][k] for c in SERIES_COLUMNS) for k in range(len(series)))
    write_csv(path, SERIES_COLUMNS, rows)


def write_audit(path: str, report: EstimateReport) -> None:
    rows = ((c.name, c.kind, c.bound, c.observed, c.margin, c.passed) for c in report.checks)
    write_csv(path, AUDIT_COLUMNS, rows)


def write_table(path: str, rows: Sequence[Dict[str, object]]) -> None:
    """Rows of dicts (or pydantic models) sharing the same keys."""
    rows = [r.model_dump() if hasattr(r, "model_dump") else r for r in rows]
    if not rows:
        write_csv(path, (), [])
        return
    columns = list(rows[0].keys())
    write_csv(path, columns, ([r[c] for c in columns] for r in rows))


def write_run_outputs(directory: str, result: RunResult, report: Optional[EstimateReport], grid: Grid1D) -> None:
    os.makedirs(directory, exist_ok=True)
    tag = eps_tag(result.level.eps)
    write_snapshots(os.path.join(directory, f"snapshots_{tag}.csv"), result, grid)
    write_series(os.path.join(directory, f"series_{tag}.csv"), result)
    if report is not None:
        write_audit(os.path.join(directory, f"audit_{tag}.csv"), report)


def validation_text(report: ValidationReport, consts: Optional[DerivedConstants]) -> str:
    lines = []
    if consts is not None:
        lines.append("Derived constants")
        for key, value in consts.model_dump().items():
            lines.append(f"  {key:<10} {fmt(value)}")
    lines.append("Hypothesis checks")
    for check in report.checks:
        mark = "PASS" if check.passed else "FAIL"
        lines.append(f"  [{mark}] {check.name:<24} margin {fmt(check.margin)} {check.detail}".rstrip())
    return "\n".join(lines) + "\n"


def audit_text(eps: str, rows: Sequence[Dict[str, str]]) -> str:
    lines = [f"Estimate audit eps={eps}"]
    for row in rows:
        mark = "PASS" if row["pass"] == "true" else "FAIL"
        lines.append(f"  [{mark}] {row['check']:<24} {row['kind']:<5} bound {row['bound']} observed {row['observed']}")
    return "\n".join(lines) + "\n"


def _line_plot(path: str, title: str, xlabel: str, ylabel: str, curves: Dict[str, Sequence[Sequence[float]]],
               logy: bool = False) -> None:
    plt.rcParams["svg.hashsalt"] = settings.svg_hash_salt
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (xs, ys) in curves.items():
        ax.plot(xs, ys, label=label, marker="o" if len(xs) < 10 else None)
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if curves:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_report(directory: str, plots: bool = True) -> str:
    """Regenerate plots and summary.txt from the CSVs in a prior output directory."""
    series_files = sorted(glob.glob(os.path.join(directory, "series_*.csv")))
    audit_files = sorted(glob.glob(os.path.join(directory, "audit_*.csv")))
    if not series_files and not audit_files:
        raise FileNotFoundError(f"no series_*.csv or audit_*.csv files in {directory}")

    def eps_of(path: str, prefix: str) -> str:
        return os.path.basename(path)[len(prefix):-len(".csv")]

    mass, entropy = {}, {}
    for path in series_files:
        rows = read_csv(path)
        t = [float(r["t"]) for r in rows]
        label = f"eps={eps_of(path, 'series_')}"
        mass[label] = (t, [float(r["mass"]) for r in rows])
        entropy[label] = (t, [float(r["y"]) for r in rows])
    if plots and mass:
        _line_plot(os.path.join(directory, "mass.svg"), "Mass", "t", "mass", mass)
        _line_plot(os.path.join(directory, "entropy.svg"), "Entropy", "t", "y", entropy)

    conc_path = os.path.join(directory, "concentration.csv")
    if plots and os.path.exists(conc_path):
        rows = read_csv(conc_path)
        curves = {}
        for col in rows[0].keys() if rows else []:
            if col != "t":
                curves[col] = ([float(r["t"]) for r in rows], [float(r[col]) for r in rows])
        _line_plot(os.path.join(directory, "concentration.svg"), "Mass fraction in {d = 0}", "t", "fraction", curves)

    cauchy_path = os.path.join(directory, "cauchy.csv")
    if plots and os.path.exists(cauchy_path):
        rows = read_csv(cauchy_path)
        if rows:
            k = [float(r["k"]) for r in rows]
            _line_plot(os.path.join(directory, "cauchy.svg"), "Cauchy distances", "k", "D_k",
                       {"u": (k, [float(r["dist_u"]) for r in rows]),
                        "w": (k, [float(r["dist_w"]) for r in rows])}, logy=True)

    parts = []
    validation_path = os.path.join(directory, "validation.txt")
    if os.path.exists(validation_path):
        with open(validation_path, encoding="utf-8") as handle:
            parts.append(handle.read())
    for path in audit_files:
        parts.append(audit_text(eps_of(path, "audit_"), read_csv(path)))
    sweep_path = os.path.join(directory, "sweep.csv")
    if os.path.exists(sweep_path):
        parts.append("Sweep\n" + "".join(
            "  " + ", ".join(f"{k}={v}" for k, v in row.items()) + "\n" for row in read_csv(sweep_path)))
    summary = "\n".join(parts)
    with open(os.path.join(directory, "summary.txt"), "w", encoding="utf-8") as handle:
        handle.write(summary)
    logger.info(f"Report rendered in {directory}")
    return summary
