"""Render the evaluation report as figures next to the delimited output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import AggregateReport  # noqa: E402


def _depths(report: AggregateReport) -> list[int]:
    return [lv.depth for lv in report.levels]


def _series(report: AggregateReport, name: str) -> tuple[list[float], list[float]]:
    means = [lv.mean[name] for lv in report.levels]
    stds = [lv.std[name] for lv in report.levels]
    return means, stds


def save_report_figures(report: AggregateReport, outdir) -> list[Path]:
    """Write coverage / rate / timing / throughput charts as PNG files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    depths = _depths(report)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    identified, identified_std = _series(report, "identified")
    downloaded, downloaded_std = _series(report, "downloaded")
    xs = range(len(depths))
    ax.bar([x - width / 2 for x in xs], identified, width, yerr=identified_std,
           capsize=3, label="identified")
    ax.bar([x + width / 2 for x in xs], downloaded, width, yerr=downloaded_std,
           capsize=3, label="downloaded")
    ax.set_xticks(list(xs), [f"depth {d}" for d in depths])
    ax.set_ylabel("pages")
    ax.set_title("Coverage per depth level")
    ax.legend()
    written.append(_save(fig, outdir / "coverage.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, label in (("relative_coverage", "relative coverage"),
                        ("failure_rate", "failure rate")):
        means, stds = _series(report, name)
        ax.errorbar(depths, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xticks(depths)
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("depth")
    ax.set_title("Success and failure rates")
    ax.legend()
    written.append(_save(fig, outdir / "rates.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    means, stds = _series(report, "execution_time_s")
    ax.errorbar(depths, means, yerr=stds, marker="s", capsize=3)
    ax.set_xticks(depths)
    ax.set_xlabel("depth")
    ax.set_ylabel("seconds")
    ax.set_title("Execution time")
    written.append(_save(fig, outdir / "execution_time.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    means, stds = _series(report, "pages_per_minute")
    ax.errorbar(depths, means, yerr=stds, marker="^", capsize=3)
    ax.set_xticks(depths)
    ax.set_xlabel("depth")
    ax.set_ylabel("pages / minute")
    ax.set_title("Download throughput")
    written.append(_save(fig, outdir / "pages_per_minute.png"))

    return written


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
