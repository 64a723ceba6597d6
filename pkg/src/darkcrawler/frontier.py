"""URL canonicalization and the breadth-first download queue.

A crawl is single-domain: a link is in scope only when its host equals the
starting link's host exactly. Onion hosts have no public-suffix structure,
so exact host equality is the only sound scope rule.
"""
from __future__ import annotations

import posixpath
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional
from urllib.parse import urljoin, urlsplit

# Schemes a frontier can actually fetch. Anything else (mailto, javascript,
# tel, data, ...) is a skip signal, never an error.
FETCHABLE_SCHEMES = ("http", "https")

_DEFAULT_PORTS = {"http": 80, "https": 443}


@dataclass(frozen=True)
class CanonicalUrl:
    """Normalized absolute URL; the unit of frontier identity."""

    scheme: str
    host: str
    port: Optional[int] = None
    path: str = "/"
    query: Optional[str] = None

    def __str__(self) -> str:
        netloc = self.host if self.port is None else f"{self.host}:{self.port}"
        url = f"{self.scheme}://{netloc}{self.path}"
        if self.query is not None:
            url += f"?{self.query}"
        return url

    @property
    def is_onion(self) -> bool:
        return self.host.endswith(".onion")

    def with_path(self, path: str, query: Optional[str] = None) -> "CanonicalUrl":
        return CanonicalUrl(self.scheme, self.host, self.port, _normalize_path(path), query)


def _normalize_path(path: str) -> str:
    """Resolve ./.. segments, collapse //, unify /a/ and /a; root stays /."""
    if not path:
        return "/"
    if not path.startswith("/"):
        path = "/" + path
    normalized = posixpath.normpath(path)
    # normpath("/") == "/", but it also strips the trailing slash we want gone
    # and can return "//" for protocol-relative-looking input.
    while normalized.startswith("//"):
        normalized = normalized[1:]
    return normalized or "/"


def normalize_url(raw: str, base: Optional[CanonicalUrl] = None) -> Optional[CanonicalUrl]:
    """Canonicalize `raw`, resolving relative inputs against `base`.

    Returns None as a skip signal for empty, unparseable, or unfetchable
    inputs (mailto:, javascript:, missing host, ...). Idempotent on its own
    output: normalize_url(str(u)) == u.
    """
    if raw is None:
        return None
    raw = raw.strip()
    if not raw:
        return None
    if base is not None:
        raw = urljoin(str(base), raw)
    try:
        parts = urlsplit(raw)
    except ValueError:
        return None
    scheme = parts.scheme.lower()
    if scheme not in FETCHABLE_SCHEMES:
        return None
    try:
        host = parts.hostname
        port = parts.port
    except ValueError:
        return None
    if not host:
        return None
    if port == _DEFAULT_PORTS.get(scheme):
        port = None
    query = parts.query if parts.query else None
    return CanonicalUrl(scheme, host.lower(), port, _normalize_path(parts.path), query)


def is_internal(url: CanonicalUrl, scope: CanonicalUrl) -> bool:
    """True iff `url` shares the starting link's host (exact match)."""
    return url.host == scope.host


@dataclass(frozen=True)
class FrontierEntry:
    url: CanonicalUrl
    depth: int


class Frontier:
    """FIFO download queue with a visited set and mirror-digest registry.

    FIFO dequeue over depth-tagged entries is what makes the crawl
    breadth-first: entries come out in enqueue order, hence in
    non-decreasing depth order.
    """

    def __init__(self, max_depth: Optional[int] = None):
        self.max_depth = max_depth
        self._queue: deque[FrontierEntry] = deque()
        self._seen: set[CanonicalUrl] = set()
        self._content_digests: set[str] = set()

    def __len__(self) -> int:
        return len(self._queue)

    @property
    def seen_count(self) -> int:
        return len(self._seen)

    def is_seen(self, url: CanonicalUrl) -> bool:
        return url in self._seen

    def seen_urls(self) -> set[CanonicalUrl]:
        """Every URL ever accepted into the queue (the enqueue log)."""
        return set(self._seen)

    def enqueue(self, url: CanonicalUrl, depth: int) -> bool:
        """Append (url, depth) unless already seen or beyond max_depth."""
        if url in self._seen:
            return False
        if self.max_depth is not None and depth > self.max_depth:
            return False
        self._seen.add(url)
        self._queue.append(FrontierEntry(url, depth))
        return True

    def dequeue(self) -> Optional[FrontierEntry]:
        if not self._queue:
            return None
        return self._queue.popleft()

    def requeue_front(self, entry: FrontierEntry) -> None:
        """Put a dequeued entry back at the head (depth-batch boundary)."""
        self._queue.appendleft(entry)

    def register_digest(self, digest: str) -> bool:
        """Record a page body digest; False means a mirror was already stored."""
        if digest in self._content_digests:
            return False
        self._content_digests.add(digest)
        return True

    def snapshot_queue(self) -> Iterator[FrontierEntry]:
        return iter(tuple(self._queue))
