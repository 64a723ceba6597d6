"""Command-line entry points: run crawls, repeat them, and emit reports."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import threading
from dataclasses import replace
from pathlib import Path

from .api import ControlApiServer
from .config import (
    CrawlConfig,
    load_market_metadata,
    load_targets_file,
    validate_config,
)
from .engine import CrawlEngine
from .errors import CrawlerError
from .figures import save_report_figures
from .metrics import AggregateReport, RunMetrics, emit_report

log = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "max_depth",
    "max_links",
    "time_limit_s",
    "proxy",
    "user_agents",
    "request_timeout_s",
    "retries",
    "backoff_base_s",
    "politeness_delay_s",
    "rng_seed",
    "output_dir",
    "workers",
    "rotate_every",
    "captcha_policy",
    "captcha_timeout_s",
    "api_port",
}


def _config_from_args(args) -> CrawlConfig:
    doc = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        doc = {k: v for k, v in raw.items() if k in _CONFIG_KEYS}
        for key in raw.keys() - _CONFIG_KEYS:
            log.warning("config file: ignoring unknown field %r", key)
    if doc.get("user_agents"):
        doc["user_agents"] = tuple(doc["user_agents"])

    cfg = CrawlConfig(**doc)
    overrides = {}
    if args.max_depth is not None:
        overrides["max_depth"] = args.max_depth
    if args.max_links is not None:
        overrides["max_links"] = args.max_links
    if args.time_limit is not None:
        overrides["time_limit_s"] = args.time_limit
    if args.targets_file:
        overrides["target_links"] = load_targets_file(args.targets_file)
    if args.proxy:
        overrides["proxy"] = args.proxy
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.politeness_delay is not None:
        overrides["politeness_delay_s"] = args.politeness_delay
    if args.captcha_policy:
        overrides["captcha_policy"] = args.captcha_policy
    if args.captcha_timeout is not None:
        overrides["captcha_timeout_s"] = args.captcha_timeout
    if args.api_port is not None:
        overrides["api_port"] = args.api_port
    if overrides:
        cfg = replace(cfg, **overrides)
    return validate_config(cfg)


def _add_crawl_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="crawl config JSON file")
    parser.add_argument("--market-meta", required=True, help="market metadata JSON file")
    parser.add_argument("--max-depth", type=int)
    parser.add_argument("--max-links", type=int)
    parser.add_argument("--time-limit", type=float, help="seconds")
    parser.add_argument("--targets-file", help="stop once every listed URL is downloaded")
    parser.add_argument("--proxy", help="socks5h://host:port or http://host:port")
    parser.add_argument("--seed", type=int, help="rng seed for UA/cookie rotation")
    parser.add_argument("--output-dir")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--politeness-delay", type=float, help="seconds between requests")
    parser.add_argument("--captcha-policy", help="abandon | fail | prompt | script:<file>")
    parser.add_argument("--captcha-timeout", type=float, help="seconds")
    parser.add_argument("--api-port", type=int, help="serve the control/event API here")
    parser.add_argument("--console-dir", help="static console bundle served at /console/")
    parser.add_argument(
        "--hold-api",
        action="store_true",
        help="keep the API (and console) up after the crawl finishes",
    )


def cmd_crawl(args) -> int:
    cfg = _config_from_args(args)
    meta = load_market_metadata(args.market_meta)
    engine = CrawlEngine(cfg, meta)

    api = None
    if cfg.api_port is not None:
        console_dir = Path(args.console_dir) if args.console_dir else None
        api = ControlApiServer(engine, console_dir=console_dir).start(port=cfg.api_port)
        print(f"control API at {api.base_url}/api/status", file=sys.stderr)
        if console_dir:
            print(f"console at {api.base_url}/console/", file=sys.stderr)

    try:
        summary = engine.run()
    finally:
        if api is not None and not args.hold_api:
            api.shutdown()

    counters = summary.state
    print(
        f"crawl finished: {counters.pages_downloaded} downloaded, "
        f"{counters.pages_failed} failed, {counters.pages_identified} identified "
        f"(stop: {counters.stop_reason})"
    )
    print(f"summary: {summary.summary_path}")
    if api is not None and args.hold_api:
        print("API held open, Ctrl-C to exit", file=sys.stderr)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            api.shutdown()
    return 0


def cmd_bench(args) -> int:
    meta = load_market_metadata(args.market_meta)
    depths = [int(d) for d in args.depths.split(",") if d.strip()]
    out_root = Path(args.output_dir or "bench-out")
    out_root.mkdir(parents=True, exist_ok=True)

    runs: list[RunMetrics] = []
    for depth in depths:
        for run_no in range(1, args.runs + 1):
            run_dir = out_root / "runs" / f"depth{depth}_run{run_no}"
            args.max_depth = depth
            args.output_dir = str(run_dir)
            cfg = _config_from_args(args)
            summary = CrawlEngine(cfg, meta).run()
            metrics = replace(summary.run_metrics, depth=depth)
            runs.append(metrics)
            print(
                f"depth {depth} run {run_no}: identified={metrics.identified} "
                f"downloaded={metrics.downloaded} failed={metrics.failed} "
                f"time={metrics.execution_time_s:.2f}s"
            )

    report = AggregateReport.from_runs(runs)
    emit_report(report, "json", out_root / "report.json")
    emit_report(report, "csv", out_root / "runs.csv")
    emit_report(report, "markdown", out_root / "report.md")
    figures = save_report_figures(report, out_root / "figures")
    print(f"report written under {out_root} ({len(figures)} figures)")
    return 0


def cmd_report(args) -> int:
    rows = list(csv.DictReader(Path(args.runs_csv).open(encoding="utf-8")))
    if not rows:
        print("runs csv is empty", file=sys.stderr)
        return 2
    runs = [
        RunMetrics(
            depth=int(row["depth"]),
            identified=int(row["identified"]),
            downloaded=int(row["downloaded"]),
            failed=int(row["failed"]),
            relative_coverage=float(row["relative_coverage"]),
            failure_rate=float(row["failure_rate"]),
            execution_time_s=float(row["execution_time_s"]),
            pages_per_minute=float(row["pages_per_minute"]),
        )
        for row in rows
    ]
    out_root = Path(args.output_dir or Path(args.runs_csv).parent)
    out_root.mkdir(parents=True, exist_ok=True)
    report = AggregateReport.from_runs(runs)
    emit_report(report, "json", out_root / "report.json")
    emit_report(report, "markdown", out_root / "report.md")
    save_report_figures(report, out_root / "figures")
    print(f"report written under {out_root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darkcrawler",
        description="Breadth-first crawler with security-layer handling and an evaluation harness.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    crawl_p = sub.add_parser("crawl", help="run one crawl against a market")
    _add_crawl_flags(crawl_p)
    crawl_p.set_defaults(fn=cmd_crawl)

    bench_p = sub.add_parser("bench", help="repeat crawls per depth and aggregate")
    _add_crawl_flags(bench_p)
    bench_p.add_argument("--depths", default="1,2,3,4", help="comma-separated depth levels")
    bench_p.add_argument("--runs", type=int, default=10, help="repetitions per depth")
    bench_p.set_defaults(fn=cmd_bench)

    report_p = sub.add_parser("report", help="re-emit report files from a runs CSV")
    report_p.add_argument("--runs-csv", required=True)
    report_p.add_argument("--output-dir")
    report_p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.fn(args)
    except CrawlerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
