from darkcrawler.figures import save_report_figures
from darkcrawler.metrics import AggregateReport, RunMetrics


def runs_fixture():
    runs = []
    for depth in (1, 2, 3):
        for n in range(3):
            downloaded = 10 * depth + n
            runs.append(
                RunMetrics(
                    depth=depth,
                    identified=downloaded + 2,
                    downloaded=downloaded,
                    failed=2,
                    relative_coverage=downloaded / (downloaded + 2),
                    failure_rate=2 / (downloaded + 2),
                    execution_time_s=5.0 * depth + n,
                    pages_per_minute=60.0 * downloaded / (5.0 * depth + n),
                )
            )
    return runs


def test_figures_rendered_next_to_report(tmp_path):
    report = AggregateReport.from_runs(runs_fixture())
    written = save_report_figures(report, tmp_path / "figures")
    names = sorted(p.name for p in written)
    assert names == [
        "coverage.png",
        "execution_time.png",
        "pages_per_minute.png",
        "rates.png",
    ]
    for path in written:
        data = path.read_bytes()
        assert data.startswith(b"\x89PNG"), path
        assert len(data) > 1000
