"""Fitness-versus-complexity regression and per-metric spread statistics.

The regression fits fitness = b0 + b1 * composite + b2 * log10(FLOPs) by
ordinary least squares on mean-centred columns. The sensitivity tables slice
records into equal-width low/mid/high levels of each normalized metric and
summarize FLOPs and fitness per slice with five-number summaries and
1.5*IQR whiskers (type-7 linear-interpolation quantiles).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDesign, ParseError
from .ioutil import atomic_write_text
from .morphometrics import CSV_COLUMNS, METRIC_NAMES, MorphoMetrics

RESULTS_HEADER = ("genome_id", "task", "seed") + CSV_COLUMNS + ("flops", "fitness")

LEVELS = ("low", "mid", "high")
RESPONSES = ("flops", "fitness")

# metric name -> which normalized column drives the level split
_LEVEL_COLUMN = {
    "heterogeneity": "het_norm",
    "connectivity": "conn_norm",
    "symmetry": "sym_norm",
    "actuator_dispersion": "act_norm",
}


@dataclass(frozen=True)
class EvalRecord:
    genome_id: str
    task: str
    seed: int
    metrics: MorphoMetrics
    flops: int
    fitness: float

    def __post_init__(self):
        if self.flops <= 0:
            raise ValueError(f"flops must be positive, got {self.flops}")


@dataclass(frozen=True)
class RegressionFit:
    beta0: float
    beta1: float
    beta2: float
    r_squared: float
    n_samples: int


@dataclass(frozen=True)
class BoxStats:
    metric: str
    level: str
    response: str
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


def fit_regression(records: list[EvalRecord], log_flops: bool = True) -> RegressionFit:
    """OLS of fitness on (composite complexity, log10 FLOPs) via normal equations.

    A zero-variance response is reported as r_squared = 1 (the constant fit is
    exact). Raises DegenerateDesign for fewer than 3 records or collinear
    regressor columns.
    """
    if len(records) < 3:
        raise DegenerateDesign(f"need at least 3 records, got {len(records)}")
    x1 = np.array([r.metrics.composite for r in records])
    flops = np.array([float(r.flops) for r in records])
    x2 = np.log10(flops) if log_flops else flops
    y = np.array([r.fitness for r in records])

    x1c = x1 - x1.mean()
    x2c = x2 - x2.mean()
    yc = y - y.mean()
    s11 = float(x1c @ x1c)
    s22 = float(x2c @ x2c)
    s12 = float(x1c @ x2c)
    det = s11 * s22 - s12 * s12
    if s11 <= 0.0 or s22 <= 0.0 or det <= 1e-12 * s11 * s22:
        raise DegenerateDesign(
            f"regressors are collinear or constant (s11={s11:.3g}, s22={s22:.3g}, "
            f"det={det:.3g})"
        )
    b1 = (s22 * float(x1c @ yc) - s12 * float(x2c @ yc)) / det
    b2 = (s11 * float(x2c @ yc) - s12 * float(x1c @ yc)) / det
    b0 = float(y.mean() - b1 * x1.mean() - b2 * x2.mean())

    residuals = y - (b0 + b1 * x1 + b2 * x2)
    ss_res = float(residuals @ residuals)
    ss_tot = float(yc @ yc)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RegressionFit(beta0=b0, beta1=b1, beta2=b2, r_squared=r_squared,
                         n_samples=len(records))


def level_of(value: float, n_levels: int = 3) -> int:
    """Equal-width level over [0, 1]; value 1.0 belongs to the top level."""
    return min(int(value * n_levels), n_levels - 1)


def sensitivity(records: list[EvalRecord], bins_per_metric: int = 3) -> list[BoxStats]:
    """Box statistics of FLOPs and fitness per (metric, level) slice.

    Quantiles interpolate linearly between order statistics; whiskers extend
    to the most extreme data point within 1.5*IQR of the box. Empty levels
    are omitted (levels partition the records, so counts per metric sum to
    the total).
    """
    if bins_per_metric != 3:
        raise ValueError("levels are named low/mid/high; bins_per_metric must be 3")
    out: list[BoxStats] = []
    for metric in METRIC_NAMES:
        column = _LEVEL_COLUMN[metric]
        for level_idx, level in enumerate(LEVELS):
            chosen = [r for r in records
                      if level_of(getattr(r.metrics, column), bins_per_metric) == level_idx]
            if not chosen:
                continue
            for response in RESPONSES:
                data = np.array([
                    float(r.flops) if response == "flops" else r.fitness for r in chosen
                ])
                q1, med, q3 = (float(q) for q in np.quantile(data, [0.25, 0.5, 0.75]))
                iqr = q3 - q1
                in_fence = data[(data >= q1 - 1.5 * iqr) & (data <= q3 + 1.5 * iqr)]
                whisker_low = float(in_fence.min())
                whisker_high = float(in_fence.max())
                outliers = tuple(
                    float(v) for v in np.sort(data[(data < whisker_low) | (data > whisker_high)])
                )
                out.append(BoxStats(
                    metric=metric, level=level, response=response, n=int(data.size),
                    minimum=float(data.min()), q1=q1, median=med, q3=q3,
                    maximum=float(data.max()), whisker_low=whisker_low,
                    whisker_high=whisker_high, outliers=outliers,
                ))
    return out


# ---- results CSV ----

def write_results_csv(records: list[EvalRecord], path: str | Path) -> None:
    """Rows ordered by (task, genome_id); floats use round-trip repr."""
    rows = [",".join(RESULTS_HEADER)]
    for r in sorted(records, key=lambda r: (r.task, r.genome_id)):
        metric_values = [repr(getattr(r.metrics, c)) for c in CSV_COLUMNS]
        rows.append(",".join(
            [r.genome_id, r.task, str(r.seed)] + metric_values + [str(r.flops), repr(r.fitness)]
        ))
    atomic_write_text(Path(path), "\n".join(rows) + "\n")


def read_results_csv(path: str | Path) -> list[EvalRecord]:
    try:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or tuple(reader.fieldnames) != RESULTS_HEADER:
                raise ParseError(
                    f"results header {reader.fieldnames} != expected {list(RESULTS_HEADER)}",
                    line=1,
                )
            records = []
            for i, row in enumerate(reader, start=2):
                try:
                    records.append(EvalRecord(
                        genome_id=row["genome_id"],
                        task=row["task"],
                        seed=int(row["seed"]),
                        metrics=MorphoMetrics.from_dict(
                            {c: float(row[c]) for c in CSV_COLUMNS}
                        ),
                        flops=int(row["flops"]),
                        fitness=float(row["fitness"]),
                    ))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"bad results row: {exc}", line=i) from None
    except OSError as exc:
        raise ParseError(f"unreadable results file {path}: {exc}") from None
    return records


# ---- report emission ----

def _configure_matplotlib():
    import matplotlib
    matplotlib.use("Agg")
    # fixed hash salt keeps SVG element ids reproducible run to run
    matplotlib.rcParams["svg.hashsalt"] = "voxelforge"
    import matplotlib.pyplot as plt
    return plt

_METRIC_COLORS = {
    "heterogeneity": "#1f77b4",
    "connectivity": "#ff7f0e",
    "symmetry": "#2ca02c",
    "actuator_dispersion": "#d62728",
}


def emit_report(fits: dict[str, RegressionFit], tables: dict[str, list[BoxStats]],
                records: list[EvalRecord], out_dir: str | Path,
                log_flops: bool = True) -> list[Path]:
    """Write regression.csv, sensitivity.csv, trend_report.md and per-task SVGs.

    Returns the list of files written. Tasks present in `records` but absent
    from `fits` (too few rows) still get sensitivity output.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    tasks = sorted({r.task for r in records})

    reg_lines = ["task,beta0,beta1,beta2,r_squared"]
    for task in tasks:
        if task in fits:
            f = fits[task]
            reg_lines.append(f"{task},{f.beta0!r},{f.beta1!r},{f.beta2!r},{f.r_squared!r}")
    reg_path = out / "regression.csv"
    atomic_write_text(reg_path, "\n".join(reg_lines) + "\n")
    written.append(reg_path)

    sens_lines = ["task,metric,level,response,n,min,q1,median,q3,max,"
                  "whisker_low,whisker_high,outliers"]
    for task in tasks:
        for s in tables.get(task, []):
            outliers = ";".join(repr(v) for v in s.outliers)
            sens_lines.append(
                f"{task},{s.metric},{s.level},{s.response},{s.n},{s.minimum!r},"
                f"{s.q1!r},{s.median!r},{s.q3!r},{s.maximum!r},{s.whisker_low!r},"
                f"{s.whisker_high!r},{outliers}"
            )
    sens_path = out / "sensitivity.csv"
    atomic_write_text(sens_path, "\n".join(sens_lines) + "\n")
    written.append(sens_path)

    written.append(_write_trend_report(fits, records, out))

    plt = _configure_matplotlib()
    for task in tasks:
        task_records = [r for r in records if r.task == task]
        written.append(_scatter_svg(plt, task, task_records, fits.get(task), out, log_flops))
        for response in RESPONSES:
            stats = [s for s in tables.get(task, []) if s.response == response]
            if stats:
                written.append(_boxplot_svg(plt, task, response, stats, out))
    return written


def _write_trend_report(fits: dict[str, RegressionFit], records: list[EvalRecord],
                        out: Path) -> Path:
    """Markdown note juxtaposing observed coefficient signs with the positive
    reference direction reported by published large-scale experiments. No
    agreement is asserted: desk-scale dynamics and budgets differ."""
    lines = [
        "# Trend report",
        "",
        "Observed regression coefficients (fitness = b0 + b1*composite + b2*log10(flops)).",
        "Reference direction from published large-scale experiments: b1 > 0 and b2 > 0",
        "(more structural and control complexity associated with higher fitness).",
        "This report documents signs side by side; it does not assert agreement,",
        "because this simulator, compute budget and reward scales all differ.",
        "",
        "| task | n | b1 | b2 | observed signs | reference signs | R^2 |",
        "|---|---|---|---|---|---|---|",
    ]
    for task in sorted(fits):
        f = fits[task]
        signs = f"{'+' if f.beta1 > 0 else '-'}, {'+' if f.beta2 > 0 else '-'}"
        lines.append(
            f"| {task} | {f.n_samples} | {f.beta1:.6g} | {f.beta2:.6g} "
            f"| {signs} | +, + | {f.r_squared:.6g} |"
        )
    skipped = sorted({r.task for r in records} - set(fits))
    if skipped:
        lines.append("")
        lines.append(f"Regression skipped (fewer than 3 rows): {', '.join(skipped)}.")
    path = out / "trend_report.md"
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def _save_svg(fig, path: Path) -> None:
    # dropping the date keeps repeated runs byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None})


def _scatter_svg(plt, task: str, records: list[EvalRecord], fit: RegressionFit | None,
                 out: Path, log_flops: bool) -> Path:
    x = np.array([r.metrics.composite for r in records])
    flops = np.array([float(r.flops) for r in records])
    y = np.log10(flops) if log_flops else flops
    fitness = np.array([r.fitness for r in records])
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if fit is not None and len(records) > 1:
        gx = np.linspace(x.min(), x.max(), 60)
        gy = np.linspace(y.min(), y.max(), 60)
        if gx[0] < gx[-1] and gy[0] < gy[-1]:
            mx, my = np.meshgrid(gx, gy)
            plane = fit.beta0 + fit.beta1 * mx + fit.beta2 * my
            contours = ax.contour(mx, my, plane, levels=8, cmap="viridis",
                                  alpha=0.5, linewidths=0.8)
            ax.clabel(contours, inline=True, fontsize=6, fmt="%.2f")
    sc = ax.scatter(x, y, c=fitness, cmap="viridis", s=28, edgecolors="k",
                    linewidths=0.3)
    fig.colorbar(sc, ax=ax, label="fitness")
    ax.set_xlabel("composite morphological complexity")
    ax.set_ylabel("log10 FLOPs" if log_flops else "FLOPs")
    ax.set_title(f"{task}: fitness vs complexity")
    fig.tight_layout()
    path = out / f"scatter_{task}.svg"
    _save_svg(fig, path)
    plt.close(fig)
    return path


def _boxplot_svg(plt, task: str, response: str, stats: list[BoxStats], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    boxes = []
    positions = []
    colors = []
    labels = []
    pos = 0
    for m_idx, metric in enumerate(METRIC_NAMES):
        metric_stats = [s for s in stats if s.metric == metric]
        for s in metric_stats:
            boxes.append({
                "med": s.median, "q1": s.q1, "q3": s.q3,
                "whislo": s.whisker_low, "whishi": s.whisker_high,
                "fliers": list(s.outliers), "label": s.level,
            })
            positions.append(pos)
            colors.append(_METRIC_COLORS[metric])
            labels.append(s.level)
            pos += 1
        if m_idx < len(METRIC_NAMES) - 1:
            ax.axvline(pos - 0.5, color="grey", linestyle="--", linewidth=0.8)
    artists = ax.bxp(boxes, positions=positions, showfliers=True, patch_artist=True)
    for patch, color in zip(artists["boxes"], colors):
        patch.set_facecolor(color)
        patch.set_alpha(0.6)
    ax.set_xticks(positions)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel(response)
    ax.set_title(f"{task}: {response} by metric level "
                 f"({' | '.join(m for m in METRIC_NAMES)})", fontsize=9)
    fig.tight_layout()
    path = out / f"boxplot_{task}_{response}.svg"
    _save_svg(fig, path)
    plt.close(fig)
    return path
