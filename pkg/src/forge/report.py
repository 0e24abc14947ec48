"""Analysis artifacts: loss-difference tables, scaling curves, heatmap renders.

Loss records arrive from external evaluation runs as delimited files; nothing
here runs a model. Deltas are variant minus baseline, classified against a
significance threshold (default 0.01): below -threshold is an improvement,
above +threshold a regression, anything else none (strict comparisons).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .needle import HeatmapGrid

SHORT_BAND = "short"  # 0 - 4K
LONG_BAND = "long"  # 4K - 128K
DEFAULT_BANDS = {SHORT_BAND: (0, 4096), LONG_BAND: (4096, 131072)}

IMPROVEMENT, REGRESSION, NONE = "improvement", "regression", "none"

DEFAULT_THRESHOLD = 0.01


@dataclass
class LossRecord:
    run_id: str
    domain: str
    band: str
    loss: float

    def validate(self) -> None:
        if not math.isfinite(self.loss) or self.loss < 0:
            raise ValueError(
                f"run {self.run_id!r} {self.domain}/{self.band}: loss must be finite and >= 0"
            )


def classify_delta(delta: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not math.isfinite(delta):
        raise ValueError(f"delta must be finite, got {delta!r}")
    if delta > threshold:
        return REGRESSION
    if delta < -threshold:
        return IMPROVEMENT
    return NONE


@dataclass
class LossDiffRow:
    variant_run: str
    domain: str
    band: str
    baseline_loss: float
    variant_loss: float
    delta: float
    significance: str


@dataclass
class LossDiffReport:
    baseline_run: str
    threshold: float
    rows: list[LossDiffRow]

    def to_rows(self) -> list[dict]:
        return [vars(r) for r in self.rows]

    def render_text(self) -> str:
        """Rows grouped by band, one table block per band."""
        lines = []
        bands = []
        for row in self.rows:
            if row.band not in bands:
                bands.append(row.band)
        for band in bands:
            lines.append(f"[{band}]")
            lines.append(f"{'variant':24s} {'domain':16s} {'baseline':>9s} {'delta':>8s} class")
            for row in self.rows:
                if row.band != band:
                    continue
                lines.append(
                    f"{row.variant_run:24s} {row.domain:16s} {row.baseline_loss:9.3f} "
                    f"{row.delta:+8.3f} {row.significance}"
                )
        return "\n".join(lines)


def loss_diff_table(
    baseline: Sequence[LossRecord],
    variants: Sequence[LossRecord],
    threshold: float = DEFAULT_THRESHOLD,
) -> LossDiffReport:
    """Per (variant, domain, band) deltas against the baseline run.

    Every variant cell must have a baseline counterpart. Output rows are
    grouped by band, then variant run, then domain.
    """
    for record in list(baseline) + list(variants):
        record.validate()
    baseline_runs = {r.run_id for r in baseline}
    if len(baseline_runs) != 1:
        raise ValueError(f"baseline must be a single run, got {sorted(baseline_runs)}")
    baseline_run = next(iter(baseline_runs))

    base_by_cell: dict[tuple[str, str], float] = {}
    for record in baseline:
        key = (record.domain, record.band)
        if key in base_by_cell:
            raise ValueError(f"duplicate baseline cell {key}")
        base_by_cell[key] = record.loss

    bands: list[str] = []
    variant_runs: list[str] = []
    for record in variants:
        if record.band not in bands:
            bands.append(record.band)
        if record.run_id not in variant_runs:
            variant_runs.append(record.run_id)

    by_key: dict[tuple[str, str, str], LossRecord] = {}
    for record in variants:
        key = (record.band, record.run_id, record.domain)
        if key in by_key:
            raise ValueError(f"duplicate variant cell {key}")
        if (record.domain, record.band) not in base_by_cell:
            raise ValueError(f"no baseline loss for ({record.domain!r}, {record.band!r})")
        by_key[key] = record

    rows = []
    for band in bands:
        for run in variant_runs:
            domains = [k[2] for k in by_key if k[0] == band and k[1] == run]
            for domain in domains:
                record = by_key[(band, run, domain)]
                base = base_by_cell[(domain, band)]
                # losses arrive as printed decimals; rounding the difference
                # keeps float representation noise from crossing the strict
                # significance boundary
                delta = round(record.loss - base, 12)
                rows.append(
                    LossDiffRow(
                        variant_run=run,
                        domain=domain,
                        band=band,
                        baseline_loss=base,
                        variant_loss=record.loss,
                        delta=delta,
                        significance=classify_delta(delta, threshold),
                    )
                )
    return LossDiffReport(baseline_run=baseline_run, threshold=threshold, rows=rows)


def read_loss_records(path: str | Path) -> list[LossRecord]:
    """CSV with header run_id,domain,band,loss."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                record = LossRecord(
                    run_id=row["run_id"],
                    domain=row["domain"],
                    band=row["band"],
                    loss=float(row["loss"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad loss record: {exc}") from None
            record.validate()
            records.append(record)
    if not records:
        raise ValueError(f"{path}: no loss records")
    return records


# ---------------------------------------------------------------------------
# Scaling curves
# ---------------------------------------------------------------------------


@dataclass
class ScalingCurvePoint:
    trained_tokens: int
    validation_loss: float
    needle_mean_score: float


def scaling_curve(points: Iterable[ScalingCurvePoint]) -> list[ScalingCurvePoint]:
    """Points sorted by trained tokens; duplicate token counts are an error."""
    points = list(points)
    if not points:
        raise ValueError("scaling curve needs at least one point")
    seen = set()
    for p in points:
        if p.trained_tokens in seen:
            raise ValueError(f"duplicate trained_tokens key {p.trained_tokens}")
        seen.add(p.trained_tokens)
    return sorted(points, key=lambda p: p.trained_tokens)


def read_curve_points(path: str | Path) -> list[ScalingCurvePoint]:
    """CSV with header trained_tokens,validation_loss,needle_mean_score."""
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                points.append(
                    ScalingCurvePoint(
                        trained_tokens=int(float(row["trained_tokens"])),
                        validation_loss=float(row["validation_loss"]),
                        needle_mean_score=float(row["needle_mean_score"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad curve point: {exc}") from None
    return points


# ---------------------------------------------------------------------------
# CSV + image rendering
# ---------------------------------------------------------------------------


def write_csv(rows: list[dict], path: str | Path) -> None:
    if not rows:
        raise ValueError("nothing to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _heatmap_rgb(score: float, green_threshold: float) -> tuple[float, float, float]:
    """At/above threshold: light-to-dark green by score; below: red to orange."""
    if score >= green_threshold:
        span = 1.0 - green_threshold
        t = (score - green_threshold) / span if span > 0 else 1.0
        return (0.55 - 0.45 * t, 0.85 - 0.25 * t, 0.35 - 0.15 * t)
    t = score / green_threshold if green_threshold > 0 else 0.0
    return (0.85, 0.15 + 0.45 * t, 0.10)


def render_heatmap(
    grid: HeatmapGrid,
    out_dir: str | Path,
    green_threshold: float = 0.8,
    train_context_len: int | None = None,
    stem: str = "heatmap",
) -> dict[str, Path]:
    """Write the score grid as a CSV table and a static image.

    Lengths run along x, depths along y. A white dashed line marks the
    training context length when given; cells to its right show length
    generalization. The CSV carries a beyond_train_context flag per row.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for depth, score_row in zip(grid.depths, grid.scores):
        for length, score in zip(grid.lengths, score_row):
            rows.append(
                {
                    "context_len": length,
                    "depth": depth,
                    "score": score,
                    "green": score >= green_threshold,
                    "beyond_train_context": (
                        "" if train_context_len is None else length > train_context_len
                    ),
                }
            )
    rows.append(
        {
            "context_len": "<mean>",
            "depth": "",
            "score": grid.mean_score,
            "green": grid.mean_score >= green_threshold,
            "beyond_train_context": "",
        }
    )
    csv_path = out / f"{stem}.csv"
    write_csv(rows, csv_path)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    rgb = np.empty((len(grid.depths), len(grid.lengths), 3))
    for i, score_row in enumerate(grid.scores):
        for j, score in enumerate(score_row):
            rgb[i, j] = _heatmap_rgb(score, green_threshold)

    fig, ax = plt.subplots(figsize=(max(6, len(grid.lengths) * 0.6), 4.5))
    ax.imshow(rgb, aspect="auto", interpolation="nearest")
    ax.set_xticks(range(len(grid.lengths)))
    ax.set_xticklabels(
        [f"{l//1024}K" if l % 1024 == 0 else str(l) for l in grid.lengths],
        rotation=45,
        ha="right",
        fontsize=7,
    )
    ax.set_yticks(range(len(grid.depths)))
    ax.set_yticklabels([f"{d:.0%}" for d in grid.depths], fontsize=7)
    ax.set_xlabel("context length (tokens)")
    ax.set_ylabel("needle depth")
    ax.set_title(f"retrieval score (mean {grid.mean_score:.3f})")
    if train_context_len is not None:
        inside = [j for j, l in enumerate(grid.lengths) if l <= train_context_len]
        if inside and len(inside) < len(grid.lengths):
            ax.axvline(x=max(inside) + 0.5, color="white", linestyle="--", linewidth=1.5)
    fig.tight_layout()
    png_path = out / f"{stem}.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return {"csv": csv_path, "png": png_path}


def render_lossdiff(report: LossDiffReport, out_path: str | Path) -> Path:
    """Static image of a loss-diff table: domains across, variant runs down,
    grouped by band. Cell color encodes the class; intensity tracks |delta|
    (display only, the 0.01 rule is the sole significance semantics)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    bands: list[str] = []
    runs: list[str] = []
    domains: list[str] = []
    for row in report.rows:
        if row.band not in bands:
            bands.append(row.band)
        if row.variant_run not in runs:
            runs.append(row.variant_run)
        if row.domain not in domains:
            domains.append(row.domain)
    by_cell = {(r.band, r.variant_run, r.domain): r for r in report.rows}

    n_rows = len(bands) * len(runs)
    fig, ax = plt.subplots(figsize=(1.4 * len(domains) + 2, 0.5 * n_rows + 1.5))
    ax.set_xlim(0, len(domains))
    ax.set_ylim(0, n_rows)
    ax.invert_yaxis()
    labels = []
    for bi, band in enumerate(bands):
        for ri, run in enumerate(runs):
            y = bi * len(runs) + ri
            labels.append(f"{band} / {run}")
            for xi, domain in enumerate(domains):
                row = by_cell.get((band, run, domain))
                if row is None:
                    continue
                intensity = min(abs(row.delta) / (4 * report.threshold), 1.0)
                if row.significance == IMPROVEMENT:
                    color = (1 - 0.6 * intensity, 1 - 0.15 * intensity, 1 - 0.6 * intensity)
                elif row.significance == REGRESSION:
                    color = (1 - 0.1 * intensity, 1 - 0.6 * intensity, 1 - 0.6 * intensity)
                else:
                    color = (0.92, 0.92, 0.92)
                ax.add_patch(plt.Rectangle((xi, y), 1, 1, facecolor=color, edgecolor="white"))
                ax.text(xi + 0.5, y + 0.5, f"{row.delta:+.3f}", ha="center", va="center", fontsize=7)
    ax.set_xticks([i + 0.5 for i in range(len(domains))])
    ax.set_xticklabels(domains, fontsize=8)
    ax.set_yticks([i + 0.5 for i in range(n_rows)])
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_title(f"loss delta vs {report.baseline_run} (threshold {report.threshold})", fontsize=9)
    ax.tick_params(length=0)
    for spine in ax.spines.values():
        spine.set_visible(False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_curve(points: Sequence[ScalingCurvePoint], out_path: str | Path) -> Path:
    """Static image of a scaling curve: loss and retrieval score vs tokens."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    xs = [p.trained_tokens for p in points]
    fig, ax_loss = plt.subplots(figsize=(6, 4))
    ax_loss.plot(xs, [p.validation_loss for p in points], marker="o", color="tab:blue", label="validation loss")
    ax_loss.set_xscale("log")
    ax_loss.set_xlabel("trained tokens")
    ax_loss.set_ylabel("validation loss", color="tab:blue")
    ax_score = ax_loss.twinx()
    ax_score.plot(xs, [p.needle_mean_score for p in points], marker="s", color="tab:green", label="retrieval score")
    ax_score.set_ylabel("retrieval mean score", color="tab:green")
    ax_score.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_histogram(hist, out_path: str | Path) -> Path:
    """Static image of a LengthHistogram: stacked per-domain doc counts."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    domains = sorted(hist.doc_counts)
    n_bins = len(hist.bin_edges)
    labels = [f"{low}+" if high is None else f"{low}-{high}" for low, high in hist.bins()]
    bottom = np.zeros(n_bins)
    fig, ax = plt.subplots(figsize=(max(6, n_bins * 0.5), 4))
    for domain in domains:
        counts = np.asarray(hist.doc_counts[domain], dtype=float)
        ax.bar(range(n_bins), counts, bottom=bottom, label=domain)
        bottom += counts
    ax.set_xticks(range(n_bins))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_xlabel("document length (tokens)")
    ax.set_ylabel("documents")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
