"""Test harness for the console e2e: runs a real crawl behind the control API.

Starts a mock market with one captcha page plus a slow politeness delay so
the node-side test has time to pause/resume and solve the challenge, then
answers line-oriented commands on stdin:

    status -> {"loglen": N, "finished": bool, "summary": {...}|null}
    quit   -> exit
"""
import json
import sys
import threading
from pathlib import Path
from tempfile import mkdtemp

from darkcrawler.api import ControlApiServer
from darkcrawler.config import CrawlConfig, MarketMetadata
from darkcrawler.engine import CrawlEngine
from darkcrawler.mockmarket import MockMarket, SiteSpec


def main() -> int:
    market = MockMarket(
        SiteSpec(page_count=60, branching=3, seed=77, captcha_pages=frozenset({1}))
    ).start()
    out_dir = mkdtemp(prefix="console-e2e-")
    cfg = CrawlConfig(
        max_depth=None,
        max_links=45,
        politeness_delay_s=0.03,
        backoff_base_s=0.002,
        output_dir=out_dir,
        captcha_policy="abandon",
        captcha_timeout_s=60.0,
    )
    meta = MarketMetadata(market_name="e2e", starting_links=(market.root_url,))
    engine = CrawlEngine(cfg, meta)
    api = ControlApiServer(engine).start()

    done = threading.Event()
    failure = []

    def run():
        try:
            engine.run()
        except Exception as exc:  # surfaced through the status command
            failure.append(str(exc))
        finally:
            done.set()

    thread = threading.Thread(target=run, daemon=True)
    thread.start()

    print(json.dumps({"ready": True, "api": api.base_url, "market": market.base_url}), flush=True)

    for line in sys.stdin:
        command = line.strip()
        if command == "quit":
            break
        if command == "status":
            summary = None
            summary_path = Path(out_dir) / "summary.json"
            if done.is_set() and summary_path.exists():
                summary = json.loads(summary_path.read_text())
            print(
                json.dumps(
                    {
                        "loglen": len(market.access_log),
                        "finished": done.is_set(),
                        "summary": summary,
                        "error": failure[0] if failure else None,
                    }
                ),
                flush=True,
            )
    api.shutdown()
    market.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
