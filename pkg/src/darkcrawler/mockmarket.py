"""Deterministic local marketplace used as the crawl oracle.

A seeded site graph is served over plain HTTP with optional login and
captcha walls plus injectable per-page faults. Every response is a pure
function of (request, per-page counters, session table), so runs replay
bit-identically and tests can assert against the access log.
"""
from __future__ import annotations

import argparse
import base64
import json
import random
import threading
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qsl, urlsplit

from .config import CookieSpec
from .frontier import CanonicalUrl, normalize_url

BEHAVIOR_ALWAYS_404 = "always404"
BEHAVIOR_N_TIMES_503 = "n_times_503"
BEHAVIOR_REDIRECT_TO_LOGIN = "redirect_to_login"
BEHAVIOR_MIRROR_OF = "mirror_of"

HOME_MARKER = "MOCKMARKET-HOME"
DEFAULT_USERNAME = "agent"
DEFAULT_PASSWORD = "hunter2"
SESSION_COOKIE = "session"

# 1x1 transparent PNG, served as the challenge image.
_CAPTCHA_PNG = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR4nGNgYGBgAAAABQAB"
    "h6FO1AAAAABJRU5ErkJggg=="
)


def captcha_answer(page_id: int) -> str:
    """Fixture challenge solution: a deterministic function of the page id."""
    return str(page_id % 97)


@dataclass(frozen=True)
class FaultRule:
    page: int
    behavior: str
    n: int = 0  # n_times_503 only
    target: int = 0  # mirror_of only


@dataclass(frozen=True)
class SiteSpec:
    page_count: int = 50
    branching: int = 3
    seed: int = 1
    login_required: bool = False
    captcha_pages: frozenset[int] = frozenset()
    fault_plan: tuple[FaultRule, ...] = ()
    cookie_ttl_requests: Optional[int] = None
    username: str = DEFAULT_USERNAME
    password: str = DEFAULT_PASSWORD

    @classmethod
    def from_dict(cls, doc: dict) -> "SiteSpec":
        rules = tuple(
            FaultRule(
                page=int(r["page"]),
                behavior=r["behavior"],
                n=int(r.get("n", 0)),
                target=int(r.get("target", 0)),
            )
            for r in doc.get("fault_plan", [])
        )
        return cls(
            page_count=int(doc.get("page_count", 50)),
            branching=int(doc.get("branching", 3)),
            seed=int(doc.get("seed", 1)),
            login_required=bool(doc.get("login_required", False)),
            captcha_pages=frozenset(int(p) for p in doc.get("captcha_pages", [])),
            fault_plan=rules,
            cookie_ttl_requests=doc.get("cookie_ttl_requests"),
            username=doc.get("username", DEFAULT_USERNAME),
            password=doc.get("password", DEFAULT_PASSWORD),
        )


@dataclass
class SiteGraph:
    """Directed page graph; page 0 is the root."""

    adjacency: list[list[int]]

    @property
    def page_count(self) -> int:
        return len(self.adjacency)

    def links_of(self, page_id: int) -> list[int]:
        return self.adjacency[page_id]


def generate_site(spec: SiteSpec) -> SiteGraph:
    """Seeded random graph, guaranteed connected from the root.

    Every page > 0 first gets one inbound link from an earlier page (a random
    spanning arborescence), then each page's outlinks are topped up with
    random targets until it carries ~branching distinct links.
    """
    if spec.page_count < 1:
        raise ValueError("page_count must be >= 1")
    rng = random.Random(spec.seed)
    n = spec.page_count
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for page in range(1, n):
        parent = rng.randrange(0, page)
        if page not in adjacency[parent]:
            adjacency[parent].append(page)
    if n > 1:
        for page in range(n):
            tries = 0
            while len(adjacency[page]) < spec.branching and tries < spec.branching * 4:
                tries += 1
                target = rng.randrange(0, n)
                if target != page and target not in adjacency[page]:
                    adjacency[page].append(target)
    return SiteGraph(adjacency)


def reachable_ids(site: SiteGraph, depth: Optional[int]) -> set[int]:
    """Reference BFS over the raw adjacency; independent of crawler code."""
    frontier = deque([(0, 0)])
    seen = {0}
    while frontier:
        page, d = frontier.popleft()
        if depth is not None and d >= depth:
            continue
        for neighbor in site.links_of(page):
            if neighbor not in seen:
                seen.add(neighbor)
                frontier.append((neighbor, d + 1))
    return seen


def oracle_reachable(
    site: SiteGraph, depth: Optional[int], base: str = "http://mockmarket.local"
) -> set[CanonicalUrl]:
    """Exact set of page URLs within `depth` hops of the root."""
    root = normalize_url(base)
    if root is None:
        raise ValueError(f"unusable base url {base!r}")
    return {root.with_path(f"/p/{page}") for page in reachable_ids(site, depth)}


def render_page(site: SiteGraph, page_id: int) -> bytes:
    lines = [
        "<!doctype html>",
        "<html><head><title>Listing %d</title></head>" % page_id,
        "<body>",
        "<h1>Listing %d</h1>" % page_id,
    ]
    if page_id == 0:
        lines.append(f"<p>{HOME_MARKER}</p>")
    lines.append("<p>Deterministic inventory text for listing %d.</p>" % page_id)
    lines.append("<ul>")
    for target in site.links_of(page_id):
        lines.append('<li><a href="/p/%d">listing %d</a></li>' % (target, target))
    lines.append("</ul>")
    lines.append("</body></html>")
    return "\n".join(lines).encode()


def render_login_page(note: str = "") -> bytes:
    extra = f"<p>{note}</p>" if note else ""
    return (
        "<!doctype html>\n<html><head><title>Sign in</title></head><body>\n"
        "<h1>Member sign in</h1>\n" + extra +
        '<form method="post" action="/login">\n'
        '<input name="username">\n<input name="password" type="password">\n'
        "<button type=\"submit\">Sign in</button>\n</form>\n</body></html>"
    ).encode()


def render_captcha_wall(page_id: int) -> bytes:
    return (
        "<!doctype html>\n<html><head><title>Hold on</title></head><body>\n"
        "<h1>Quick captcha check</h1>\n"
        "<p>Solve the captcha below to reach listing %d.</p>\n"
        '<img src="/captcha.png">\n'
        '<form method="post" action="/p/%d">\n'
        '<input name="answer">\n<button type="submit">Submit</button>\n'
        "</form>\n</body></html>" % (page_id, page_id)
    ).encode()


@dataclass
class _ServerState:
    spec: SiteSpec
    site: SiteGraph
    sessions: dict = field(default_factory=dict)  # token -> remaining uses (None=infinite)
    solved_captchas: set = field(default_factory=set)
    fault_503_left: dict = field(default_factory=dict)
    session_counter: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        for rule in self.spec.fault_plan:
            if rule.behavior == BEHAVIOR_N_TIMES_503:
                self.fault_503_left[rule.page] = rule.n

    def mint_session(self) -> str:
        with self.lock:
            self.session_counter += 1
            token = f"s{self.session_counter:06d}"
            self.sessions[token] = self.spec.cookie_ttl_requests
            return token

    def session_valid(self, token: Optional[str]) -> bool:
        with self.lock:
            return token in self.sessions and (
                self.sessions[token] is None or self.sessions[token] > 0
            )

    def consume_session_use(self, token: str) -> None:
        with self.lock:
            if self.sessions.get(token) is not None:
                self.sessions[token] -= 1


class MockMarket:
    """In-process mock marketplace with an inspectable access log."""

    def __init__(self, spec: SiteSpec, site: Optional[SiteGraph] = None):
        self.spec = spec
        self.site = site if site is not None else generate_site(spec)
        self.state = _ServerState(spec, self.site)
        self.access_log: list[dict] = []
        self._log_lock = threading.Lock()
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None
        self.fault_by_page = {rule.page: rule for rule in spec.fault_plan}

    # -- lifecycle -----------------------------------------------------------

    def start(self, host: str = "127.0.0.1", port: int = 0) -> "MockMarket":
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    @property
    def base_url(self) -> str:
        assert self._httpd is not None, "server not started"
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def root_url(self) -> str:
        return f"{self.base_url}/p/0"

    def shutdown(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockMarket":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    # -- fixtures ------------------------------------------------------------

    def mint_session_cookie(self) -> CookieSpec:
        """Pre-bake a valid session, as an operator pasting a cookie would."""
        token = self.state.mint_session()
        return CookieSpec(name=SESSION_COOKIE, value=token, domain="127.0.0.1", path="/")

    def log_append(self, entry: dict) -> None:
        with self._log_lock:
            self.access_log.append(entry)

    def requests_for(self, path: str) -> list[dict]:
        with self._log_lock:
            return [e for e in self.access_log if e["path"] == path]

    def cookies_seen(self) -> set[str]:
        """Distinct session token values presented across all requests."""
        tokens = set()
        with self._log_lock:
            for entry in self.access_log:
                for pair in entry["cookie"].split(";"):
                    name, _, value = pair.strip().partition("=")
                    if name == SESSION_COOKIE and value:
                        tokens.add(value)
        return tokens

    def oracle(self, depth: Optional[int]) -> set[CanonicalUrl]:
        return oracle_reachable(self.site, depth, base=self.base_url)


def _make_handler(market: MockMarket):
    state = market.state
    spec = market.spec
    site = market.site

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "mockmarket/0.1"

        def log_message(self, fmt, *args):  # keep pytest output clean
            pass

        # -- plumbing --------------------------------------------------------

        def _session_token(self) -> Optional[str]:
            header = self.headers.get("Cookie", "")
            for pair in header.split(";"):
                name, _, value = pair.strip().partition("=")
                if name == SESSION_COOKIE:
                    return value
            return None

        def _record(self, body: bytes = b"") -> None:
            market.log_append(
                {
                    "method": self.command,
                    "path": self.path,
                    "headers": dict(self.headers.items()),
                    "cookie": self.headers.get("Cookie", ""),
                    "user_agent": self.headers.get("User-Agent", ""),
                    "body": body.decode("utf-8", errors="replace"),
                }
            )

        def _send(self, status: int, body: bytes = b"", content_type: str = "text/html; charset=utf-8", extra: Optional[dict] = None):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            for key, value in (extra or {}).items():
                self.send_header(key, value)
            self.end_headers()
            if body:
                self.wfile.write(body)

        def _redirect(self, location: str, extra: Optional[dict] = None):
            headers = {"Location": location}
            headers.update(extra or {})
            self._send(302, b"", extra=headers)

        def _page_id(self) -> Optional[int]:
            path = urlsplit(self.path).path
            if not path.startswith("/p/"):
                return None
            tail = path[len("/p/"):]
            return int(tail) if tail.isdigit() else None

        # -- request handling --------------------------------------------------

        def do_GET(self):
            self._record()
            path = urlsplit(self.path).path
            if path == "/login":
                self._send(200, render_login_page())
                return
            if path == "/captcha.png":
                self._send(200, _CAPTCHA_PNG, content_type="image/png")
                return
            page_id = self._page_id()
            if page_id is None or not (0 <= page_id < site.page_count):
                self._send(404, b"<html><body><h1>404 not found</h1></body></html>")
                return
            self._serve_page(page_id)

        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length) if length else b""
            self._record(body)
            path = urlsplit(self.path).path
            form = dict(parse_qsl(body.decode("utf-8", errors="replace")))
            if path == "/login":
                self._handle_login(form)
                return
            page_id = self._page_id()
            if page_id is None or not (0 <= page_id < site.page_count):
                self._send(404, b"not found")
                return
            self._handle_captcha_answer(page_id, form)

        def _handle_login(self, form: dict):
            if form.get("username") == spec.username and form.get("password") == spec.password:
                token = state.mint_session()
                self._redirect(
                    "/p/0", extra={"Set-Cookie": f"{SESSION_COOKIE}={token}; Path=/"}
                )
            else:
                self._send(200, render_login_page(note="Invalid username or password."))

        def _handle_captcha_answer(self, page_id: int, form: dict):
            # The answer form POSTs back to the page path.
            if spec.login_required and not self._authorized():
                self._redirect("/login")
                return
            if page_id in spec.captcha_pages and page_id not in state.solved_captchas:
                if form.get("answer") == captcha_answer(page_id):
                    with state.lock:
                        state.solved_captchas.add(page_id)
                    self._redirect(f"/p/{page_id}")
                else:
                    self._send(200, render_captcha_wall(page_id))
                return
            self._redirect(f"/p/{page_id}")

        def _authorized(self) -> bool:
            token = self._session_token()
            if token is None or not state.session_valid(token):
                return False
            state.consume_session_use(token)
            return True

        def _serve_page(self, page_id: int):
            rule = market.fault_by_page.get(page_id)
            if rule is not None and rule.behavior == BEHAVIOR_ALWAYS_404:
                self._send(404, b"<html><body><h1>404 not found</h1></body></html>")
                return
            if rule is not None and rule.behavior == BEHAVIOR_N_TIMES_503:
                with state.lock:
                    remaining = state.fault_503_left.get(page_id, 0)
                    if remaining > 0:
                        state.fault_503_left[page_id] = remaining - 1
                        serve_503 = True
                    else:
                        serve_503 = False
                if serve_503:
                    self._send(503, b"<html><body><h1>503 temporarily unavailable</h1></body></html>")
                    return
            if spec.login_required and not self._authorized():
                self._redirect("/login")
                return
            if rule is not None and rule.behavior == BEHAVIOR_REDIRECT_TO_LOGIN:
                self._redirect("/login")
                return
            if page_id in spec.captcha_pages and page_id not in state.solved_captchas:
                self._send(200, render_captcha_wall(page_id))
                return
            body_id = page_id
            if rule is not None and rule.behavior == BEHAVIOR_MIRROR_OF:
                body_id = rule.target
            self._send(200, render_page(site, body_id))

    return Handler


def serve(site: SiteGraph, spec: SiteSpec, host: str = "127.0.0.1", port: int = 0) -> MockMarket:
    """Start serving `site` on a local port; returns the running handle."""
    return MockMarket(spec, site).start(host=host, port=port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mockmarket", description="Serve a deterministic mock marketplace."
    )
    parser.add_argument("--spec", required=True, help="site spec JSON file")
    parser.add_argument("--port", type=int, default=8040)
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)

    doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = SiteSpec.from_dict(doc)
    market = MockMarket(spec).start(host=args.host, port=args.port)
    print(f"mockmarket serving {spec.page_count} pages at {market.base_url}/p/0")
    if spec.login_required:
        print(f"login at {market.base_url}/login with {spec.username}/{spec.password}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        print("shutting down")
        market.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
