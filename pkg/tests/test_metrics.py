import json
import math
import random

import pytest

from darkcrawler.metrics import (
    CSV_COLUMNS,
    AggregateReport,
    RunMetrics,
    aggregate_runs,
    compute_run_metrics,
    emit_report,
    render_markdown,
)

OUTCOMES = ("downloaded", "failed", "duplicate", "skipped")


def synth_manifest(rng, pages):
    records = []
    for n in range(pages):
        records.append(
            {
                "url": f"http://m.onion/p/{n}",
                "outcome": rng.choice(OUTCOMES),
            }
        )
    return records


def brute_force_recount(records, wall_clock_s, extra_urls=()):
    """Independent oracle: recount the manifest with plain loops."""
    urls = set()
    downloaded = failed = 0
    for record in records:
        urls.add(record["url"])
        if record["outcome"] == "downloaded":
            downloaded += 1
        if record["outcome"] == "failed":
            failed += 1
    urls.update(extra_urls)
    identified = len(urls)
    return {
        "identified": identified,
        "downloaded": downloaded,
        "failed": failed,
        "relative_coverage": downloaded / identified if identified else 0.0,
        "failure_rate": failed / identified if identified else 0.0,
        "pages_per_minute": downloaded / (wall_clock_s / 60.0) if wall_clock_s else 0.0,
    }


def test_compute_matches_brute_force_on_randomized_manifests():
    rng = random.Random(20240817)
    for trial in range(50):
        pages = rng.randint(0, 120)
        records = synth_manifest(rng, pages)
        wall = rng.uniform(0.5, 300.0)
        extra = [f"http://m.onion/q/{n}" for n in range(rng.randint(0, 10))]
        got = compute_run_metrics(records, wall, identified_urls=extra, depth=1)
        expected = brute_force_recount(records, wall, extra)
        assert got.identified == expected["identified"]
        assert got.downloaded == expected["downloaded"]
        assert got.failed == expected["failed"]
        assert got.relative_coverage == pytest.approx(expected["relative_coverage"])
        assert got.failure_rate == pytest.approx(expected["failure_rate"])
        assert got.pages_per_minute == pytest.approx(expected["pages_per_minute"])
        assert got.execution_time_s == wall


def test_rate_arithmetic_example():
    records = [{"url": f"http://m/p/{n}", "outcome": "downloaded"} for n in range(111)]
    records += [{"url": f"http://m/f/{n}", "outcome": "failed"} for n in range(6)]
    metrics = compute_run_metrics(records, 60.0)
    assert metrics.identified == 117
    assert metrics.relative_coverage == pytest.approx(111 / 117)  # ~0.949
    assert metrics.failure_rate == pytest.approx(6 / 117)  # ~0.051
    assert metrics.pages_per_minute == pytest.approx(111.0)


def test_empty_manifest_is_all_zero():
    metrics = compute_run_metrics([], 0.0)
    assert metrics.identified == 0
    assert metrics.downloaded == 0
    assert metrics.relative_coverage == 0.0
    assert metrics.failure_rate == 0.0
    assert metrics.pages_per_minute == 0.0


def make_run(depth=1, identified=10, downloaded=10, failed=0, rate=None, fail_rate=None,
             exec_s=60.0, ppm=10.0):
    return RunMetrics(
        depth=depth,
        identified=identified,
        downloaded=downloaded,
        failed=failed,
        relative_coverage=rate if rate is not None else downloaded / identified,
        failure_rate=fail_rate if fail_rate is not None else failed / identified,
        execution_time_s=exec_s,
        pages_per_minute=ppm,
    )


def test_aggregate_identical_runs_zero_std():
    stats = aggregate_runs([make_run() for _ in range(10)])
    assert stats.run_count == 10
    assert stats.mean["identified"] == 10
    assert all(value == 0.0 for value in stats.std.values())


def test_aggregate_all_downloads_full_rate():
    # Ten runs downloading everything they identified: mean rate 1, std 0.
    runs = [make_run(identified=116, downloaded=116) for _ in range(10)]
    stats = aggregate_runs(runs)
    assert stats.mean["relative_coverage"] == 1.0
    assert stats.std["relative_coverage"] == 0.0
    assert stats.std["downloaded"] == 0.0


def test_aggregate_mean_of_ratios_hand_arithmetic():
    runs = [
        make_run(identified=10, downloaded=10, rate=1.0),
        make_run(identified=10, downloaded=8, rate=0.8),
    ]
    stats = aggregate_runs(runs)
    assert stats.mean["relative_coverage"] == pytest.approx(0.9)
    assert stats.std["relative_coverage"] == pytest.approx(0.1)


def test_aggregate_uses_population_std():
    runs = [make_run(exec_s=10.0), make_run(exec_s=20.0)]
    stats = aggregate_runs(runs)
    # population std of [10, 20] is 5, sample std would be ~7.07
    assert stats.std["execution_time_s"] == pytest.approx(5.0)


def test_aggregate_rejects_mixed_depths():
    with pytest.raises(ValueError, match="mix depth"):
        aggregate_runs([make_run(depth=1), make_run(depth=2)])


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError, match="no runs"):
        aggregate_runs([])


def test_aggregate_permutation_invariant():
    runs = [make_run(exec_s=float(n)) for n in range(5)]
    forward = aggregate_runs(runs)
    backward = aggregate_runs(list(reversed(runs)))
    assert forward.mean == backward.mean
    assert forward.std == backward.std


def test_report_json_schema(tmp_path):
    runs = [make_run(depth=d) for d in (1, 1, 2, 2)]
    report = AggregateReport.from_runs(runs)
    path = emit_report(report, "json", tmp_path / "report.json")
    doc = json.loads(path.read_text())
    assert [lv["depth"] for lv in doc["depth_levels"]] == [1, 2]
    level = doc["depth_levels"][0]
    assert level["runs"] == 2
    for name in (
        "identified",
        "downloaded",
        "failed",
        "relative_coverage",
        "failure_rate",
        "execution_time_s",
        "pages_per_minute",
    ):
        assert set(level["metrics"][name]) == {"mean", "std"}


def test_report_csv_columns_and_rows(tmp_path):
    runs = [make_run(depth=1), make_run(depth=1), make_run(depth=2)]
    report = AggregateReport.from_runs(runs)
    path = emit_report(report, "csv", tmp_path / "runs.csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    assert lines[1].startswith("1,1,")
    assert lines[2].startswith("1,2,")
    assert lines[3].startswith("2,1,")


def test_report_csv_no_runs_errors(tmp_path):
    report = AggregateReport([], [])
    with pytest.raises(ValueError, match="no runs"):
        emit_report(report, "csv", tmp_path / "runs.csv")


def test_report_markdown_golden(tmp_path):
    runs = [
        make_run(depth=1, identified=116, downloaded=116, exec_s=173.3, ppm=28.975),
        make_run(depth=1, identified=116, downloaded=116, exec_s=173.3, ppm=28.975),
    ]
    report = AggregateReport.from_runs(runs)
    expected = "\n".join(
        [
            "# Crawl evaluation report",
            "",
            "## DEPTH 1 (2 runs)",
            "",
            "| statistic | identified | success | rate | failed | failure rate | execution time (s) | pages/min |",
            "|---|---|---|---|---|---|---|---|",
            "| mean | 116.000 | 116.000 | 1.000 | 0.000 | 0.000 | 173.300 | 28.975 |",
            "| std | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 |",
            "",
        ]
    )
    assert render_markdown(report) == expected


def test_report_unknown_format(tmp_path):
    report = AggregateReport.from_runs([make_run()])
    with pytest.raises(ValueError, match="unknown report format"):
        emit_report(report, "yaml", tmp_path / "x")


def test_rates_sum_to_one_without_dups_or_skips():
    records = [{"url": f"http://m/p/{n}", "outcome": "downloaded"} for n in range(7)]
    records += [{"url": f"http://m/f/{n}", "outcome": "failed"} for n in range(3)]
    metrics = compute_run_metrics(records, 10.0)
    assert metrics.relative_coverage + metrics.failure_rate == pytest.approx(1.0)
