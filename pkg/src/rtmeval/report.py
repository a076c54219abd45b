"""Corpus report rendering: delimited metrics, table text, and a summary figure.

The figure is written as SVG with a pinned hash salt and no date metadata so
repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import CorpusReport

_CSV_COLUMNS = (
    "pipeline",
    "days",
    "abnormality_recall_pct",
    "duration_recall_pct",
    "coverage_pct",
    "hallucinations",
    "hallucination_rate_per_day",
    "misclassifications",
)


def write_metrics_csv(report: CorpusReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_COLUMNS)
        for metrics in report.pipelines:
            record = metrics.to_record()
            writer.writerow(["" if record[c] is None else record[c] for c in _CSV_COLUMNS])


def write_report_json(report: CorpusReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_record(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def write_metrics_figure(report: CorpusReport, path: str | Path) -> None:
    """Grouped bar chart of the three event metrics per pipeline."""
    plt.rcParams["svg.hashsalt"] = "rtmeval"
    labels = [m.pipeline for m in report.pipelines]
    series = {
        "Abnormality": [
            (m.abnormality_recall or 0.0) * 100.0 for m in report.pipelines
        ],
        "Duration": [(m.duration_recall or 0.0) * 100.0 for m in report.pipelines],
        "Coverage": [m.coverage * 100.0 for m in report.pipelines],
    }
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    width = 0.25
    for offset, (name, values) in enumerate(series.items()):
        positions = [i + (offset - 1) * width for i in range(len(labels))]
        ax.bar(positions, values, width=width, label=name)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=15)
    ax.set_ylabel("%")
    ax.set_ylim(0, 105)
    ax.set_title(f"Event-level metrics ({report.mode})")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report_files(report: CorpusReport, out_dir: str | Path) -> list[Path]:
    """Write the full report bundle; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "report.txt"
    json_path = out_dir / "corpus_report.json"
    csv_path = out_dir / "corpus_metrics.csv"
    figure_path = out_dir / "corpus_metrics.svg"
    table_path.write_text(report.to_table(), encoding="utf-8")
    write_report_json(report, json_path)
    write_metrics_csv(report, csv_path)
    write_metrics_figure(report, figure_path)
    return [table_path, json_path, csv_path, figure_path]
