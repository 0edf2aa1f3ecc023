"""Report output: metrics.csv, metrics.json, a plain-text table and one bar chart per metric."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .config import atomic_write  # noqa: E402
from .evaluation import METRIC_TITLES, METRICS, MetricsReport, format_ordering  # noqa: E402

COLUMNS = ("simulator", "agent", "n", "errors", "turn_cap", *METRICS)

# small, print-friendly defaults; fixed so figures are byte-stable across runs
RC = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "crsim",
}


def _fmt(value, digits: int = 3) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r.get(c), 6) for c in COLUMNS])
    return buf.getvalue()


def to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"


def to_table(report: MetricsReport) -> str:
    """One block per simulator: agents as columns, metrics as rows, orderings below."""
    lines = []
    agents = report.agents
    width = max(14, *(len(a) + 2 for a in agents))
    for sim in report.simulators:
        lines.append(f"== {sim} ==")
        lines.append(f"{'':<14}" + "".join(f"{a:>{width}}" for a in agents))
        for m in METRICS:
            cells = []
            for a in agents:
                try:
                    cells.append(_fmt(report.value(a, sim, m)))
                except KeyError:
                    cells.append("-")
            lines.append(f"{METRIC_TITLES[m]:<14}" + "".join(f"{c:>{width}}" for c in cells))
        for m, groups in report.orderings.get(sim, {}).items():
            if m in ("reward", "success_rate"):
                lines.append(f"  {METRIC_TITLES[m]} ordering: {format_ordering(groups)}")
        lines.append("")
    return "\n".join(lines)


def plot_metric(report: MetricsReport, metric: str, path: Path) -> None:
    agents, sims = report.agents, report.simulators
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        width = 0.8 / max(1, len(sims))
        for k, sim in enumerate(sims):
            values = []
            for a in agents:
                try:
                    v = report.value(a, sim, metric)
                except KeyError:
                    v = None
                values.append(0.0 if v is None else v)
            xs = [i + (k - (len(sims) - 1) / 2) * width for i in range(len(agents))]
            ax.bar(xs, values, width=width, label=sim)
        ax.set_xticks(range(len(agents)))
        ax.set_xticklabels(agents)
        ax.set_ylabel(METRIC_TITLES[metric])
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="png", metadata={"Software": None})
        plt.close(fig)


def write_report(report: MetricsReport, out_dir: str | Path, figures: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {"csv": out / "metrics.csv", "json": out / "metrics.json", "table": out / "metrics.txt"}
    atomic_write(paths["csv"], to_csv(report))
    atomic_write(paths["json"], to_json(report))
    atomic_write(paths["table"], to_table(report))
    if figures:
        fig_dir = out / "figures"
        fig_dir.mkdir(parents=True, exist_ok=True)
        for m in METRICS:
            paths[f"fig_{m}"] = fig_dir / f"{m}.png"
            plot_metric(report, m, paths[f"fig_{m}"])
    return paths
