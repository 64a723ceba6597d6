"""Crawl orchestration: startup checks, the BFS loop, and stop criteria.

One control loop owns the frontier, cookie jar, rotator, and counters.
Worker threads only execute fetches; every mutation funnels back through
the loop, and a pending captcha parks its URL instead of stalling the loop.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import captcha as captcha_mod
from .captcha import (
    STATE_SOLVED,
    CaptchaChallenge,
    ChallengeRegistry,
    ChallengeSolution,
    detect_captcha,
)
from .config import CookieSpec, CrawlConfig, MarketMetadata, validate_config
from .errors import CrawlerError, LoginFailed, LoginRejected, NoValidStartingLink
from .extractor import (
    OUTCOME_DOWNLOADED,
    OUTCOME_DUPLICATE,
    OUTCOME_FAILED,
    FetchMeta,
    PageStore,
    content_digest,
    extract_links,
)
from .frontier import CanonicalUrl, Frontier, FrontierEntry, is_internal, normalize_url
from .metrics import RunMetrics, compute_run_metrics
from .session import CookieJar, login, validate_cookie
from .transport import (
    FetchResult,
    TransportSettings,
    UserAgentRotator,
    detect_unexpected_redirect,
    fetch,
    parse_proxy,
)

log = logging.getLogger(__name__)

STOP_MAX_DEPTH = "MaxDepth"
STOP_MAX_LINKS = "MaxLinks"
STOP_TIME_LIMIT = "TimeLimit"
STOP_TARGETS_COMPLETE = "TargetsComplete"
STOP_FRONTIER_EXHAUSTED = "FrontierExhausted"
STOP_OPERATOR = "OperatorStop"

# How long the loop naps while only parked challenges remain.
_IDLE_WAIT_S = 0.05


@dataclass
class CrawlState:
    started_at: float = 0.0
    started_at_iso: str = ""
    pages_identified: int = 0
    pages_downloaded: int = 0
    pages_failed: int = 0
    pages_duplicate: int = 0
    pages_skipped: int = 0
    current_depth_in_flight: int = 0
    targets_done: int = 0
    stop_reason: Optional[str] = None

    def elapsed_s(self) -> float:
        return time.monotonic() - self.started_at if self.started_at else 0.0


@dataclass
class CrawlSummary:
    state: CrawlState
    run_metrics: RunMetrics
    manifest_path: Path
    summary_path: Path
    challenges: list[CaptchaChallenge] = field(default_factory=list)
    rotations: list[dict] = field(default_factory=list)
    downloaded_urls: set = field(default_factory=set)
    failed_urls: set = field(default_factory=set)


class EventBus:
    """Append-only event log; SSE readers block on the condition."""

    def __init__(self):
        self._events: list[dict] = []
        self._cond = threading.Condition()

    def emit(self, event_type: str, **payload) -> dict:
        event = {"type": event_type, "ts": time.time(), "payload": payload}
        with self._cond:
            self._events.append(event)
            self._cond.notify_all()
        return event

    def events_since(self, index: int, timeout_s: Optional[float] = None) -> list[dict]:
        with self._cond:
            if index >= len(self._events) and timeout_s:
                self._cond.wait(timeout_s)
            return list(self._events[index:])

    def all(self) -> list[dict]:
        with self._cond:
            return list(self._events)


def probe_starting_links(
    meta: MarketMetadata,
    settings: TransportSettings,
    rotator: Optional[UserAgentRotator] = None,
    cookies: Sequence[CookieSpec] = (),
) -> tuple[CanonicalUrl, FetchResult]:
    """Probe starting links in listed order; first reachable one wins."""
    probes = []
    for raw in meta.starting_links:
        url = normalize_url(raw)
        if url is None:
            probes.append(f"{raw}: unparseable")
            continue
        result = fetch(url, cookies=cookies, rotator=rotator, settings=settings)
        if result.ok:
            return url, result
        detail = f"status={result.final_status}"
        if result.error:
            detail += f" ({result.error})"
        probes.append(f"{raw}: {detail}")
    raise NoValidStartingLink("no valid starting link; probes: " + "; ".join(probes))


def select_starting_link(
    meta: MarketMetadata,
    settings: TransportSettings,
    rotator: Optional[UserAgentRotator] = None,
    cookies: Sequence[CookieSpec] = (),
) -> CanonicalUrl:
    return probe_starting_links(meta, settings, rotator, cookies)[0]


def should_stop(
    state: CrawlState,
    cfg: CrawlConfig,
    frontier: Frontier,
    pending_challenges: int = 0,
) -> Optional[str]:
    """First satisfied criterion in fixed precedence, or None to continue."""
    if cfg.time_limit_s is not None and state.elapsed_s() >= cfg.time_limit_s:
        return STOP_TIME_LIMIT
    if cfg.max_links is not None and state.pages_downloaded >= cfg.max_links:
        return STOP_MAX_LINKS
    if cfg.target_links and state.targets_done >= len(cfg.target_links):
        return STOP_TARGETS_COMPLETE
    if len(frontier) == 0 and pending_challenges == 0:
        return STOP_FRONTIER_EXHAUSTED
    return None


@dataclass
class _Parked:
    challenge: CaptchaChallenge
    entry: FrontierEntry
    deadline: float


class CrawlEngine:
    """Owns one crawl run; `run()` executes it to a CrawlSummary."""

    def __init__(self, cfg: CrawlConfig, meta: MarketMetadata):
        self.cfg = validate_config(cfg)
        self.meta = meta
        proxy = parse_proxy(cfg.proxy) if cfg.proxy else None
        self.settings = TransportSettings(
            timeout_s=cfg.request_timeout_s,
            retries=cfg.retries,
            backoff_base_s=cfg.backoff_base_s,
            proxy=proxy,
        )
        self.rotator = UserAgentRotator(cfg.user_agents, seed=cfg.rng_seed)
        self.jar = CookieJar(seed=cfg.rng_seed + 1)
        self.frontier = Frontier(max_depth=cfg.max_depth)
        self.state = CrawlState()
        self.registry = ChallengeRegistry()
        self.events = EventBus()
        self.rotations: list[dict] = []
        self.store: Optional[PageStore] = None
        self.scope: Optional[CanonicalUrl] = None
        self.login_path = meta.credentials.login_path if meta.credentials else None
        self._parked: list[_Parked] = []
        self._prefetched: dict[CanonicalUrl, FetchResult] = {}
        self._successes_since_rotation = 0
        self._downloaded_urls: set[CanonicalUrl] = set()
        self._failed_urls: set[CanonicalUrl] = set()
        self._targets_hit: set[CanonicalUrl] = set()
        self._challenged_urls: set[CanonicalUrl] = set()
        self._commands: list[dict] = []
        self._command_lock = threading.Lock()
        self._paused = threading.Event()
        self._stop_requested = False
        self._script_solver = None
        if cfg.captcha_policy.startswith("script:"):
            self._script_solver = captcha_mod.load_script_solver(
                cfg.captcha_policy.split(":", 1)[1]
            )
        self.lifecycle = "idle"

    # -- control surface (used by the API server and tests) -------------------

    def post_command(self, action: str, **kwargs) -> None:
        if action not in ("pause", "resume", "stop", "add_cookie"):
            raise ValueError(f"unknown control action {action!r}")
        with self._command_lock:
            self._commands.append({"action": action, **kwargs})

    def status_view(self) -> dict:
        pending = len(self.registry.pending())
        return {
            "state": self.lifecycle,
            "market": self.meta.market_name,
            "pages_identified": self.state.pages_identified,
            "pages_downloaded": self.state.pages_downloaded,
            "pages_failed": self.state.pages_failed,
            "pages_duplicate": self.state.pages_duplicate,
            "current_depth": self.state.current_depth_in_flight,
            "elapsed_s": round(self.state.elapsed_s(), 3),
            "pending_challenges": pending,
            "stop_reason": self.state.stop_reason,
            "limits": {
                "max_depth": self.cfg.max_depth,
                "max_links": self.cfg.max_links,
                "time_limit_s": self.cfg.time_limit_s,
                "targets_total": len(self.cfg.target_links or ()),
                "targets_done": self.state.targets_done,
            },
        }

    # -- startup ---------------------------------------------------------------

    def _acquire_cookies(self, base: CanonicalUrl) -> None:
        """Manual jar and/or automated login, then validation of every cookie."""
        for cookie in self.meta.cookies:
            self.jar.add(cookie)
        if self.meta.credentials is not None:
            try:
                cookie = login(self.meta, base, self.settings, self.rotator)
            except (LoginFailed, LoginRejected) as exc:
                # The security layer blocks us before the crawl can begin.
                raise NoValidStartingLink(f"login rejected: {exc}") from exc
            self.jar.add(cookie)
        if len(self.jar) == 0:
            return
        self.jar.shuffle_rotation()

        usable = 0
        for idx in list(self.jar.rotation_order):
            cookie = self.jar.cookies[idx]
            valid, cause = validate_cookie(
                cookie, base, self.login_path, self.settings, self.rotator,
                hint_markers=self.meta.captcha_hints,
            )
            if valid or cause == "transient":
                usable += 1
            else:
                self.jar.mark_failed(idx)
                log.warning("cookie %s failed validation (%s)", cookie.name, cause)
        if usable == 0:
            # Only fatal when the site actually gates content behind a session.
            probe = fetch(base, rotator=self.rotator, settings=self.settings)
            if detect_unexpected_redirect(
                base, probe.redirect_chain, self.login_path, self.meta.captcha_hints
            ):
                raise NoValidStartingLink("all configured cookies failed validation")
            log.warning("no cookie validated; site appears open, continuing without")
        self.jar.skip_failed()

    # -- cookie rotation ---------------------------------------------------------

    def _current_cookies(self) -> list[CookieSpec]:
        cookie = self.jar.current_cookie()
        return [cookie] if cookie is not None else []

    def _rotate_cookie(self, cause: str) -> None:
        if len(self.jar) == 0:
            return
        previous = self.jar.current_cookie()
        if cause == "unexpected-redirect":
            self.jar.mark_current_failed()
        self.jar.advance()
        self.jar.skip_failed()
        if self.jar.exhausted:
            self.jar.shuffle_rotation()
            self.jar.skip_failed()
            if self.meta.credentials is not None and self.scope is not None:
                try:
                    fresh = login(self.meta, self.scope, self.settings, self.rotator)
                    self.jar.add(fresh)
                    self.jar.move_to(len(self.jar) - 1)
                except CrawlerError as exc:
                    log.warning("re-login during rotation failed: %s", exc)
        self._successes_since_rotation = 0
        current = self.jar.current_cookie()
        self.rotations.append(
            {
                "ts": time.time(),
                "cause": cause,
                "from": previous.value if previous else None,
                "to": current.value if current else None,
            }
        )

    # -- main loop -----------------------------------------------------------

    def run(self) -> CrawlSummary:
        self.lifecycle = "starting"
        self.events.emit("state_change", state="starting")
        self.store = PageStore(self.cfg.output_dir)
        self.state.started_at = time.monotonic()
        self.state.started_at_iso = datetime.now(timezone.utc).isoformat()

        base, probe_result = probe_starting_links(
            self.meta, self.settings, self.rotator, cookies=tuple(self.meta.cookies)
        )
        self.scope = base
        self._acquire_cookies(base)
        if len(self.jar) == 0:
            # No security layer: the validity probe already holds the root
            # page, so the loop must not fetch it a second time.
            self._prefetched[base] = probe_result

        self.frontier.enqueue(base, 0)
        self.state.pages_identified += 1

        self.lifecycle = "running"
        self.events.emit("state_change", state="running")
        try:
            if self.cfg.workers <= 1:
                self._run_sequential()
            else:
                self._run_parallel()
        finally:
            self._abandon_all_parked()
            self.lifecycle = "finished"
        summary = self._finalize()
        self.events.emit(
            "state_change", state="finished", stop_reason=self.state.stop_reason
        )
        return summary

    def _run_sequential(self) -> None:
        while True:
            if not self._loop_gate():
                return
            entry = self.frontier.dequeue()
            if entry is None:
                # Only parked challenges remain; wait for solutions or timeouts.
                time.sleep(_IDLE_WAIT_S)
                continue
            self.state.current_depth_in_flight = entry.depth
            self._process_entry(entry)

    def _run_parallel(self) -> None:
        # Depth-synchronized pool: fetches for depth d+1 never start while a
        # depth-d entry is still queued, preserving BFS order.
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            while True:
                if not self._loop_gate():
                    return
                batch: list[FrontierEntry] = []
                head_depth = None
                while len(batch) < self.cfg.workers:
                    peek = self.frontier.dequeue()
                    if peek is None:
                        break
                    if head_depth is None:
                        head_depth = peek.depth
                    elif peek.depth != head_depth:
                        # Different depth: process in the next batch.
                        self.frontier.requeue_front(peek)
                        break
                    batch.append(peek)
                if not batch:
                    time.sleep(_IDLE_WAIT_S)
                    continue
                self.state.current_depth_in_flight = batch[0].depth
                cookies = self._current_cookies()
                futures = [
                    pool.submit(self._fetch_entry, entry, cookies) for entry in batch
                ]
                # Every dequeued entry must leave a manifest record, so the
                # whole batch is processed; stop criteria apply between batches
                # (downloads may overshoot a limit by at most workers-1).
                for entry, future in zip(batch, futures):
                    self._handle_fetch(entry, future.result())

    def _loop_gate(self) -> bool:
        """Commands, pause, stop criteria, and parked-challenge sweep."""
        while True:
            self._drain_commands()
            if self._stop_requested:
                self.state.stop_reason = STOP_OPERATOR
                return False
            if self._paused.is_set():
                # Paused means no new fetches at all; even parked-challenge
                # resolutions wait for resume.
                time.sleep(_IDLE_WAIT_S)
                continue
            self._sweep_parked()
            reason = should_stop(self.state, self.cfg, self.frontier, len(self._parked))
            if reason is not None:
                self.state.stop_reason = reason
                return False
            return True

    def _drain_commands(self) -> None:
        with self._command_lock:
            commands, self._commands = self._commands, []
        for command in commands:
            action = command["action"]
            if action == "pause":
                self._paused.set()
                self.lifecycle = "paused"
                self.events.emit("state_change", state="paused")
            elif action == "resume":
                self._paused.clear()
                self.lifecycle = "running"
                self.events.emit("state_change", state="running")
            elif action == "stop":
                self._stop_requested = True
            elif action == "add_cookie":
                self.jar.add(command["cookie"])

    # -- per-entry processing --------------------------------------------------

    def _fetch_entry(self, entry: FrontierEntry, cookies: Sequence[CookieSpec]) -> FetchResult:
        cached = self._prefetched.pop(entry.url, None)
        if cached is not None:
            return cached
        if self.cfg.politeness_delay_s > 0:
            time.sleep(self.cfg.politeness_delay_s)
        return fetch(
            entry.url, cookies=cookies, rotator=self.rotator, settings=self.settings
        )

    def _process_entry(self, entry: FrontierEntry) -> None:
        result = self._fetch_entry(entry, self._current_cookies())
        self._handle_fetch(entry, result)

    def _handle_fetch(self, entry: FrontierEntry, result: FetchResult) -> None:
        # Session expiry shows up as a redirect off the requested page.
        if detect_unexpected_redirect(
            entry.url, result.redirect_chain, self.login_path, self.meta.captcha_hints
        ):
            if len(self.jar) == 0:
                self._record_failure(entry, result, error="unexpected-redirect")
                return
            result = self._refetch_with_rotation(entry, result)
            if result is None:
                return

        if not result.ok:
            self._record_failure(entry, result)
            return

        challenge = detect_captcha(result.body, entry.url, self.meta.captcha_hints)
        if challenge is not None and entry.url not in self._challenged_urls:
            self._challenged_urls.add(entry.url)
            self._open_challenge(entry, challenge)
            return

        self._finish_page(entry, result)

    def _refetch_with_rotation(
        self, entry: FrontierEntry, result: FetchResult
    ) -> Optional[FetchResult]:
        """Rotate cookies and retry the URL; None means a record was written."""
        attempts = 0
        max_attempts = len(self.jar) + 1
        while attempts < max_attempts:
            attempts += 1
            self._rotate_cookie("unexpected-redirect")
            result = self._fetch_entry(entry, self._current_cookies())
            if not detect_unexpected_redirect(
                entry.url, result.redirect_chain, self.login_path, self.meta.captcha_hints
            ):
                return result
        self._record_failure(entry, result, error="unexpected-redirect after rotation")
        return None

    def _open_challenge(self, entry: FrontierEntry, challenge: CaptchaChallenge) -> None:
        self.registry.open(challenge)
        self.events.emit(
            "challenge_opened",
            id=challenge.id,
            url=str(challenge.url),
            matched_pattern=challenge.matched_pattern,
            image_refs=[str(u) for u in challenge.image_refs],
        )
        policy = self.cfg.captcha_policy
        if policy == "fail":
            raise CrawlerError(f"captcha wall at {challenge.url} (policy=fail)")
        if self._script_solver is not None:
            solution = captcha_mod.solution_from_script(self._script_solver, challenge)
            if solution is None:
                self.registry.abandon(challenge.id)
                self._close_challenge(entry, challenge, None)
            else:
                self.registry.submit(solution)
                self._close_challenge(entry, challenge, solution)
            return
        if policy == "prompt":
            threading.Thread(
                target=self._prompt_worker, args=(challenge,), daemon=True
            ).start()
        deadline = time.monotonic() + self.cfg.captcha_timeout_s
        self._parked.append(_Parked(challenge, entry, deadline))

    def _prompt_worker(self, challenge: CaptchaChallenge) -> None:
        solution = captcha_mod.prompt_for_solution(challenge)
        try:
            if solution is None:
                self.registry.abandon(challenge.id)
            else:
                self.registry.submit(solution)
        except Exception:
            pass  # challenge raced to a terminal state; nothing to do

    def _sweep_parked(self) -> None:
        if not self._parked:
            return
        still_parked = []
        for parked in self._parked:
            if parked.challenge.state == STATE_SOLVED:
                solution = self.registry.solution_for(parked.challenge.id)
                self._close_challenge(parked.entry, parked.challenge, solution)
            elif time.monotonic() >= parked.deadline:
                self.registry.abandon(parked.challenge.id)
                self._close_challenge(parked.entry, parked.challenge, None)
            else:
                still_parked.append(parked)
        self._parked = still_parked

    def _abandon_all_parked(self) -> None:
        for parked in self._parked:
            self.registry.abandon(parked.challenge.id)
            self._close_challenge(parked.entry, parked.challenge, None)
        self._parked = []

    def _close_challenge(
        self,
        entry: FrontierEntry,
        challenge: CaptchaChallenge,
        solution: Optional[ChallengeSolution],
    ) -> None:
        self.events.emit("challenge_closed", id=challenge.id, state=challenge.state)
        if solution is None:
            self._record_failure(entry, None, error="captcha-abandoned", status=0)
            return
        if solution.cookie is not None:
            self.jar.add(solution.cookie)
            result = fetch(
                entry.url,
                cookies=[solution.cookie],
                rotator=self.rotator,
                settings=self.settings,
            )
        else:
            target = challenge.form_action or entry.url
            result = fetch(
                target,
                cookies=self._current_cookies(),
                rotator=self.rotator,
                settings=self.settings,
                method="POST",
                form_data=list(solution.fields.items()),
            )
        if not result.ok:
            self._record_failure(entry, result, error="captcha-solution-rejected")
            return
        if detect_captcha(result.body, entry.url, self.meta.captcha_hints) is not None:
            # Wall survived the solution; one attempt per solution, no storm.
            self._record_failure(entry, result, error="captcha-solution-rejected")
            return
        self._finish_page(entry, result)

    # -- outcomes ---------------------------------------------------------------

    def _record_failure(
        self,
        entry: FrontierEntry,
        result: Optional[FetchResult],
        error: Optional[str] = None,
        status: Optional[int] = None,
    ) -> None:
        final_status = status if status is not None else (result.final_status if result else 0)
        cause = error
        if cause is None and result is not None:
            cause = result.error or f"http-{result.final_status}"
        meta = FetchMeta(
            url=entry.url,
            depth=entry.depth,
            final_status=final_status,
            outcome=OUTCOME_FAILED,
            elapsed_ms=int(result.elapsed_s * 1000) if result else 0,
            error=cause or "unknown",
        )
        record = self.store.store_page(None, meta)
        self.state.pages_failed += 1
        self._failed_urls.add(entry.url)
        self.events.emit(
            "page",
            url=str(entry.url),
            depth=entry.depth,
            outcome=record.outcome,
            status=final_status,
        )

    def _finish_page(self, entry: FrontierEntry, result: FetchResult) -> None:
        digest = content_digest(result.body)
        fresh = self.frontier.register_digest(digest)
        outcome = OUTCOME_DOWNLOADED if fresh else OUTCOME_DUPLICATE
        meta = FetchMeta(
            url=entry.url,
            depth=entry.depth,
            final_status=result.final_status,
            outcome=outcome,
            elapsed_ms=int(result.elapsed_s * 1000),
        )
        record = self.store.store_page(result.body, meta)

        if record.outcome == OUTCOME_DOWNLOADED:
            self.state.pages_downloaded += 1
            self._downloaded_urls.add(entry.url)
            self._successes_since_rotation += 1
            if self.cfg.target_links and entry.url in self.cfg.target_links:
                self._targets_hit.add(entry.url)
                self.state.targets_done = len(self._targets_hit)
            if (
                len(self.jar) > 1
                and self._successes_since_rotation >= self.cfg.rotate_every
            ):
                self._rotate_cookie("interval")
            is_html = "html" in (result.content_type or "").lower()
            if is_html:
                for link in extract_links(result.body, entry.url):
                    if not is_internal(link, self.scope):
                        continue
                    if self.frontier.enqueue(link, entry.depth + 1):
                        self.state.pages_identified += 1
        else:
            self.state.pages_duplicate += 1

        self.events.emit(
            "page",
            url=str(entry.url),
            depth=entry.depth,
            outcome=record.outcome,
            status=result.final_status,
        )

    # -- wrap-up ------------------------------------------------------------------

    def _finalize(self) -> CrawlSummary:
        elapsed = self.state.elapsed_s()
        # The enqueue log keeps URLs identified but never dequeued (a stop
        # criterion cut the queue short) counted as identified.
        run_metrics = compute_run_metrics(
            self.store.records,
            elapsed,
            identified_urls=(str(u) for u in self.frontier.seen_urls()),
            depth=self.cfg.max_depth if self.cfg.max_depth is not None else -1,
        )
        challenges = self.registry.all()
        summary_doc = {
            "market": self.meta.market_name,
            "started_at": self.state.started_at_iso,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "execution_time_s": elapsed,
            "stop_reason": self.state.stop_reason,
            "counters": {
                "identified": self.state.pages_identified,
                "downloaded": self.state.pages_downloaded,
                "failed": self.state.pages_failed,
                "duplicate": self.state.pages_duplicate,
                "skipped": self.state.pages_skipped,
            },
            "targets_done": self.state.targets_done,
            "rotations": self.rotations,
            "challenges": [c.to_dict() for c in challenges],
            "metrics": run_metrics.to_dict(),
            "manifest": self.store.MANIFEST_NAME,
        }
        summary_path = Path(self.cfg.output_dir) / "summary.json"
        summary_path.write_text(json.dumps(summary_doc, indent=2) + "\n", encoding="utf-8")
        return CrawlSummary(
            state=self.state,
            run_metrics=run_metrics,
            manifest_path=self.store.manifest_path,
            summary_path=summary_path,
            challenges=challenges,
            rotations=self.rotations,
            downloaded_urls=set(self._downloaded_urls),
            failed_urls=set(self._failed_urls),
        )


def crawl(cfg: CrawlConfig, meta: MarketMetadata) -> CrawlSummary:
    """Run one crawl end to end (validity check, cookies, BFS loop, summary)."""
    return CrawlEngine(cfg, meta).run()
