"""Control and event HTTP API served next to a running crawl.

The engine behaves identically whether or not anything is listening here:
the API only reads state, forwards operator commands, and streams the same
event log the summary is built from. The operator console is served as
static files under /console/ when a bundle directory is configured.
"""
from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .captcha import ChallengeSolution, UnknownChallenge
from .config import CookieSpec
from .engine import CrawlEngine

SSE_KEEPALIVE_S = 15.0


class ControlApiServer:
    """Thin HTTP facade over one CrawlEngine."""

    def __init__(self, engine: CrawlEngine, console_dir: Optional[Path] = None):
        self.engine = engine
        self.console_dir = Path(console_dir) if console_dir else None
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    def start(self, host: str = "127.0.0.1", port: int = 0) -> "ControlApiServer":
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
    def port(self) -> int:
        assert self._httpd is not None, "server not started"
        return self._httpd.server_address[1]

    def shutdown(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None


def _make_handler(server: ControlApiServer):
    engine = server.engine

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "darkcrawler-api/0.1"

        def log_message(self, fmt, *args):
            pass

        # -- helpers -----------------------------------------------------------

        def _json(self, status: int, doc) -> None:
            body = json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", "0"))
            if not length:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except json.JSONDecodeError:
                return {}

        # -- GET ---------------------------------------------------------------

        def do_GET(self):
            if self.path == "/api/status":
                self._json(200, engine.status_view())
            elif self.path == "/api/challenges":
                pending = [c.to_dict() for c in engine.registry.pending()]
                self._json(200, {"challenges": pending})
            elif self.path == "/api/events":
                self._stream_events()
            elif self.path == "/" or self.path.startswith("/console"):
                self._serve_console()
            else:
                self._json(404, {"error": "not found"})

        def _stream_events(self):
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            index = 0
            try:
                while True:
                    events = engine.events.events_since(index, timeout_s=SSE_KEEPALIVE_S)
                    if not events:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    for event in events:
                        data = json.dumps(event)
                        self.wfile.write(f"data: {data}\n\n".encode())
                    self.wfile.flush()
                    index += len(events)
            except (BrokenPipeError, ConnectionResetError, OSError):
                return

        def _serve_console(self):
            if server.console_dir is None:
                self._json(404, {"error": "console bundle not configured"})
                return
            rel = self.path[len("/console"):].lstrip("/") or "index.html"
            if self.path == "/":
                rel = "index.html"
            base = server.console_dir.resolve()
            target = (server.console_dir / rel).resolve()
            if not target.is_relative_to(base) or not target.is_file():
                self._json(404, {"error": "not found"})
                return
            body = target.read_bytes()
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        # -- POST ---------------------------------------------------------------

        def do_POST(self):
            doc = self._read_body()
            if self.path == "/api/control":
                action = doc.get("action")
                if action not in ("pause", "resume", "stop"):
                    self._json(400, {"error": f"unknown action {action!r}"})
                    return
                engine.post_command(action)
                self._json(200, {"ok": True, "action": action})
            elif self.path == "/api/cookies":
                name = doc.get("name")
                if not name:
                    self._json(400, {"error": "cookie needs a name"})
                    return
                cookie = CookieSpec(
                    name=name,
                    value=doc.get("value", ""),
                    domain=doc.get("domain", ""),
                    path=doc.get("path", "/"),
                    source="manual",
                )
                engine.post_command("add_cookie", cookie=cookie)
                self._json(200, {"ok": True})
            elif self.path.startswith("/api/challenges/") and self.path.endswith("/solution"):
                challenge_id = self.path[len("/api/challenges/"):-len("/solution")]
                self._submit_solution(challenge_id, doc)
            else:
                self._json(404, {"error": "not found"})

        def _submit_solution(self, challenge_id: str, doc: dict):
            fields = doc.get("fields") or {}
            cookie_doc = doc.get("cookie") or None
            if bool(fields) == bool(cookie_doc):
                self._json(400, {"error": "provide exactly one of fields / cookie"})
                return
            cookie = None
            if cookie_doc:
                if not cookie_doc.get("name"):
                    self._json(400, {"error": "cookie needs a name"})
                    return
                cookie = CookieSpec(
                    name=cookie_doc["name"],
                    value=cookie_doc.get("value", ""),
                    source="manual",
                )
            try:
                solution = ChallengeSolution(
                    challenge_id=challenge_id,
                    fields={str(k): str(v) for k, v in fields.items()},
                    cookie=cookie,
                )
                engine.registry.submit(solution)
            except UnknownChallenge:
                self._json(404, {"error": f"unknown challenge {challenge_id!r}"})
                return
            except ValueError as exc:
                # Already solved or abandoned: conflict, idempotent state.
                self._json(409, {"error": str(exc)})
                return
            self._json(200, {"ok": True, "challenge": challenge_id})

    return Handler
