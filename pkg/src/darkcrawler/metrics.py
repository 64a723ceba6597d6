"""Coverage / performance / robustness metrics and the repeated-run report.

Per-run ratios are averaged as mean-of-ratios (each run's rate computed
first, then averaged) and spreads use the population standard deviation, so
identical runs aggregate to an exact zero std.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .extractor import (
    OUTCOME_DOWNLOADED,
    OUTCOME_DUPLICATE,
    OUTCOME_FAILED,
    OUTCOME_SKIPPED,
    PageRecord,
)

METRIC_FIELDS = (
    "identified",
    "downloaded",
    "failed",
    "relative_coverage",
    "failure_rate",
    "execution_time_s",
    "pages_per_minute",
)

CSV_COLUMNS = ("depth", "run") + METRIC_FIELDS


@dataclass(frozen=True)
class RunMetrics:
    """One crawl's worth of evaluation numbers."""

    depth: int
    identified: int
    downloaded: int
    failed: int
    relative_coverage: float
    failure_rate: float
    execution_time_s: float
    pages_per_minute: float

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in ("depth",) + METRIC_FIELDS}


def compute_run_metrics(
    records: Iterable[PageRecord | dict],
    wall_clock_s: float,
    identified_urls: Optional[Iterable] = None,
    depth: int = 0,
) -> RunMetrics:
    """Recount a finished manifest into RunMetrics.

    identified = unique URLs seen in the manifest plus the enqueue log (URLs
    discovered but never dequeued still count as identified). Rates divide
    by identified and fall back to 0 on an empty crawl.
    """
    urls = set()
    downloaded = 0
    failed = 0
    for record in records:
        if isinstance(record, dict):
            url, outcome = record["url"], record["outcome"]
        else:
            url, outcome = record.url, record.outcome
        urls.add(str(url))
        if outcome == OUTCOME_DOWNLOADED:
            downloaded += 1
        elif outcome == OUTCOME_FAILED:
            failed += 1
    if identified_urls is not None:
        urls.update(str(u) for u in identified_urls)
    identified = len(urls)

    relative_coverage = downloaded / identified if identified else 0.0
    failure_rate = failed / identified if identified else 0.0
    minutes = wall_clock_s / 60.0
    pages_per_minute = downloaded / minutes if minutes > 0 else 0.0
    return RunMetrics(
        depth=depth,
        identified=identified,
        downloaded=downloaded,
        failed=failed,
        relative_coverage=relative_coverage,
        failure_rate=failure_rate,
        execution_time_s=wall_clock_s,
        pages_per_minute=pages_per_minute,
    )


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _population_std(values: Sequence[float]) -> float:
    mu = _mean(values)
    return math.sqrt(sum((v - mu) ** 2 for v in values) / len(values))


@dataclass(frozen=True)
class DepthStats:
    """Mean and population std of every metric over one depth level's runs."""

    depth: int
    run_count: int
    mean: dict
    std: dict


class AggregateReport:
    """Per-depth statistics over repeated runs, plus the raw runs themselves."""

    def __init__(self, levels: Sequence[DepthStats], runs: Sequence[RunMetrics]):
        self.levels = sorted(levels, key=lambda lv: lv.depth)
        self.runs = list(runs)

    @classmethod
    def from_runs(cls, runs: Sequence[RunMetrics]) -> "AggregateReport":
        if not runs:
            raise ValueError("no runs")
        by_depth: dict[int, list[RunMetrics]] = {}
        for run in runs:
            by_depth.setdefault(run.depth, []).append(run)
        levels = [aggregate_runs(group) for group in by_depth.values()]
        return cls(levels, runs)

    def to_dict(self) -> dict:
        return {
            "depth_levels": [
                {
                    "depth": lv.depth,
                    "runs": lv.run_count,
                    "metrics": {
                        name: {"mean": lv.mean[name], "std": lv.std[name]}
                        for name in METRIC_FIELDS
                    },
                }
                for lv in self.levels
            ]
        }


def aggregate_runs(runs: Sequence[RunMetrics]) -> DepthStats:
    """Field-wise mean/std of runs from a single depth level."""
    if not runs:
        raise ValueError("no runs")
    depths = {run.depth for run in runs}
    if len(depths) != 1:
        raise ValueError(f"runs mix depth labels: {sorted(depths)}")
    mean = {}
    std = {}
    for name in METRIC_FIELDS:
        values = [float(getattr(run, name)) for run in runs]
        mean[name] = _mean(values)
        std[name] = _population_std(values)
    return DepthStats(depth=depths.pop(), run_count=len(runs), mean=mean, std=std)


REPORT_FORMATS = ("json", "csv", "markdown")


def emit_report(report: AggregateReport, fmt: str, path) -> Path:
    """Write the aggregate report as json, csv (per-run rows), or markdown."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    elif fmt == "csv":
        if not report.runs:
            raise ValueError("no runs")
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(CSV_COLUMNS)
        run_index: dict[int, int] = {}
        for run in report.runs:
            run_index[run.depth] = run_index.get(run.depth, 0) + 1
            writer.writerow(
                [run.depth, run_index[run.depth]]
                + [getattr(run, name) for name in METRIC_FIELDS]
            )
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "markdown":
        path.write_text(render_markdown(report), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r} (expected one of {REPORT_FORMATS})")
    return path


def render_markdown(report: AggregateReport) -> str:
    """DEPTH-sectioned mean/std tables over the identified/success/rate shape."""
    out = ["# Crawl evaluation report", ""]
    for lv in report.levels:
        out.append(f"## DEPTH {lv.depth} ({lv.run_count} runs)")
        out.append("")
        out.append("| statistic | identified | success | rate | failed | failure rate | execution time (s) | pages/min |")
        out.append("|---|---|---|---|---|---|---|---|")
        for stat, row in (("mean", lv.mean), ("std", lv.std)):
            out.append(
                "| {} | {:.3f} | {:.3f} | {:.3f} | {:.3f} | {:.3f} | {:.3f} | {:.3f} |".format(
                    stat,
                    row["identified"],
                    row["downloaded"],
                    row["relative_coverage"],
                    row["failed"],
                    row["failure_rate"],
                    row["execution_time_s"],
                    row["pages_per_minute"],
                )
            )
        out.append("")
    return "\n".join(out)


def recount_outcomes(records: Iterable[PageRecord | dict]) -> dict:
    """Plain outcome tally (downloaded/failed/duplicate/skipped) of a manifest."""
    counts = {
        OUTCOME_DOWNLOADED: 0,
        OUTCOME_FAILED: 0,
        OUTCOME_DUPLICATE: 0,
        OUTCOME_SKIPPED: 0,
    }
    for record in records:
        outcome = record["outcome"] if isinstance(record, dict) else record.outcome
        counts[outcome] = counts.get(outcome, 0) + 1
    return counts
