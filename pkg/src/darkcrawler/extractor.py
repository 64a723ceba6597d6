"""HTML parsing, content digests, and local page storage.

Only `a[href]` anchors feed the frontier. Pages land in
`<output_dir>/pages/<digest>.html`, one file per distinct body, and every
dequeued URL leaves exactly one line in `manifest.jsonl` whatever its fate.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import Optional

from .errors import StorageError
from .frontier import CanonicalUrl, normalize_url

OUTCOME_DOWNLOADED = "downloaded"
OUTCOME_FAILED = "failed"
OUTCOME_DUPLICATE = "duplicate"
OUTCOME_SKIPPED = "skipped"


def content_digest(body: bytes) -> str:
    """SHA-256 of the raw body, hex-encoded (64 chars)."""
    return hashlib.sha256(body).hexdigest()


class _PageParser(HTMLParser):
    """Tolerant single-pass collector of anchors, image refs, and forms."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.hrefs: list[str] = []
        self.image_srcs: list[str] = []
        self.forms: list[dict] = []
        self._form: Optional[dict] = None

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        attrs = dict(attrs)
        if tag == "a":
            href = attrs.get("href")
            if href:
                self.hrefs.append(href)
        elif tag == "img":
            src = attrs.get("src")
            if src:
                self.image_srcs.append(src)
        elif tag == "form":
            self._form = {
                "action": attrs.get("action") or "",
                "method": (attrs.get("method") or "get").lower(),
                "inputs": [],
            }
            self.forms.append(self._form)
        elif tag == "input" and self._form is not None:
            name = attrs.get("name")
            if name:
                self._form["inputs"].append(name)

    def handle_endtag(self, tag):
        if tag.lower() == "form":
            self._form = None


def parse_page(body: bytes) -> _PageParser:
    """Best-effort parse; never raises on malformed markup."""
    parser = _PageParser()
    try:
        parser.feed(body.decode("utf-8", errors="replace"))
        parser.close()
    except Exception:
        pass  # tolerate anything the parser chokes on; partial results are fine
    return parser


def extract_links(body: bytes, base: CanonicalUrl) -> list[CanonicalUrl]:
    """Canonicalized a[href] targets, deduplicated, in document order."""
    seen = set()
    links = []
    for href in parse_page(body).hrefs:
        url = normalize_url(href, base=base)
        if url is None or url in seen:
            continue
        seen.add(url)
        links.append(url)
    return links


def extract_image_refs(body: bytes, base: CanonicalUrl) -> list[CanonicalUrl]:
    seen = set()
    refs = []
    for src in parse_page(body).image_srcs:
        url = normalize_url(src, base=base)
        if url is None or url in seen:
            continue
        seen.add(url)
        refs.append(url)
    return refs


@dataclass(frozen=True)
class PageRecord:
    """One manifest line: what happened to one dequeued URL."""

    url: CanonicalUrl
    depth: int
    final_status: int
    outcome: str
    content_digest: str = ""
    stored_path: str = ""
    fetched_at: str = ""
    elapsed_ms: int = 0
    error: str = ""

    def to_manifest_line(self) -> str:
        doc = {
            "url": str(self.url),
            "depth": self.depth,
            "status": self.final_status,
            "outcome": self.outcome,
            "digest": self.content_digest,
            "path": self.stored_path,
            "fetched_at": self.fetched_at,
            "elapsed_ms": self.elapsed_ms,
        }
        if self.error:
            doc["error"] = self.error
        return json.dumps(doc, sort_keys=False)


@dataclass
class FetchMeta:
    """Fetch facts store_page needs to cut a record."""

    url: CanonicalUrl
    depth: int
    final_status: int
    outcome: str
    elapsed_ms: int = 0
    error: str = ""
    fetched_at: str = ""

    def timestamp(self) -> str:
        return self.fetched_at or datetime.now(timezone.utc).isoformat()


class PageStore:
    """Write-once page files plus an append-only JSONL manifest."""

    MANIFEST_NAME = "manifest.jsonl"

    def __init__(self, root):
        self.root = Path(root)
        self.pages_dir = self.root / "pages"
        try:
            self.pages_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create page store under {self.root}: {exc}") from exc
        self.manifest_path = self.root / self.MANIFEST_NAME
        try:
            self.manifest_path.touch()
        except OSError as exc:
            raise StorageError(f"cannot create manifest {self.manifest_path}: {exc}") from exc
        self.records: list[PageRecord] = []

    def store_page(self, body: Optional[bytes], meta: FetchMeta) -> PageRecord:
        """Persist body (when downloadable) and append one manifest record.

        An already-present digest file downgrades the outcome to duplicate;
        failed/skipped outcomes write no file. Disk trouble is fatal.
        """
        digest = ""
        stored_path = ""
        outcome = meta.outcome
        if outcome in (OUTCOME_DOWNLOADED, OUTCOME_DUPLICATE) and body is not None:
            digest = content_digest(body)
            page_path = self.pages_dir / f"{digest}.html"
            if page_path.exists():
                outcome = OUTCOME_DUPLICATE
            else:
                try:
                    page_path.write_bytes(body)
                except OSError as exc:
                    raise StorageError(f"cannot write page file {page_path}: {exc}") from exc
                outcome = OUTCOME_DOWNLOADED
            if outcome == OUTCOME_DOWNLOADED:
                stored_path = str(page_path.relative_to(self.root))

        record = PageRecord(
            url=meta.url,
            depth=meta.depth,
            final_status=meta.final_status,
            outcome=outcome,
            content_digest=digest,
            stored_path=stored_path,
            fetched_at=meta.timestamp(),
            elapsed_ms=meta.elapsed_ms,
            error=meta.error,
        )
        try:
            with self.manifest_path.open("a", encoding="utf-8") as fh:
                fh.write(record.to_manifest_line() + "\n")
        except OSError as exc:
            raise StorageError(f"cannot append manifest {self.manifest_path}: {exc}") from exc
        self.records.append(record)
        return record


def read_manifest(path) -> list[dict]:
    """Load manifest.jsonl back into dicts (post-hoc analysis helper)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]
