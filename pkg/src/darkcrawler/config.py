"""Crawl configuration and the per-market metadata dossier.

Both documents are JSON. The metadata file drives the security layer:
starting links, login credentials, pre-baked cookies, and captcha hints.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .frontier import CanonicalUrl, normalize_url

log = logging.getLogger(__name__)

# Ten common desktop browser strings; rotation picks among these unless the
# config supplies its own list.
DEFAULT_USER_AGENTS = [
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:125.0) Gecko/20100101 Firefox/125.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.4 Safari/605.1.15",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/123.0.0.0 Safari/537.36",
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/122.0.0.0 Safari/537.36",
    "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:124.0) Gecko/20100101 Firefox/124.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/121.0.0.0 Safari/537.36 Edg/121.0.2277.83",
    "Mozilla/5.0 (Windows NT 10.0; WOW64; rv:115.0) Gecko/20100101 Firefox/115.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0.0.0 Safari/537.36 OPR/106.0.0.0",
    "Mozilla/5.0 (X11; Fedora; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/119.0.0.0 Safari/537.36",
]

DEFAULT_RNG_SEED = 42
DEFAULT_REQUEST_TIMEOUT_S = 30.0
DEFAULT_RETRIES = 2
DEFAULT_POLITENESS_DELAY_S = 0.5
DEFAULT_ROTATE_EVERY = 25
DEFAULT_CAPTCHA_TIMEOUT_S = 600.0


@dataclass(frozen=True)
class CookieSpec:
    """One cookie, either written by the operator or minted by login."""

    name: str
    value: str
    domain: str = ""
    path: str = "/"
    source: str = "manual"  # manual | login

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("cookie name must be non-empty")

    def header_pair(self) -> str:
        return f"{self.name}={self.value}"

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "domain": self.domain, "path": self.path}


@dataclass(frozen=True)
class Credentials:
    username: str
    password: str
    login_path: str
    username_field: str = "username"
    password_field: str = "password"
    extra_fields: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.login_path:
            raise ConfigurationError("credentials.login_path must be non-empty")
        if not self.username_field or not self.password_field:
            raise ConfigurationError("credentials field names must be non-empty")


@dataclass(frozen=True)
class MarketMetadata:
    """Per-site dossier: where to start and how to get past the security layer."""

    market_name: str
    starting_links: tuple[str, ...]
    credentials: Optional[Credentials] = None
    cookies: tuple[CookieSpec, ...] = ()
    captcha_hints: tuple[str, ...] = ()
    expected_home_marker: str = ""

    def __post_init__(self):
        if not self.starting_links:
            raise ConfigurationError("starting_links must be non-empty")

    def to_dict(self) -> dict:
        doc = {
            "market_name": self.market_name,
            "starting_links": list(self.starting_links),
            "cookies": [c.to_dict() for c in self.cookies],
            "captcha_hints": list(self.captcha_hints),
            "expected_home_marker": self.expected_home_marker,
        }
        if self.credentials is not None:
            doc["credentials"] = {
                "username": self.credentials.username,
                "password": self.credentials.password,
                "login_path": self.credentials.login_path,
                "username_field": self.credentials.username_field,
                "password_field": self.credentials.password_field,
                "extra_fields": dict(self.credentials.extra_fields),
            }
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


_METADATA_KEYS = {
    "market_name",
    "starting_links",
    "credentials",
    "cookies",
    "captcha_hints",
    "expected_home_marker",
}
_CREDENTIAL_KEYS = {
    "username",
    "password",
    "login_path",
    "username_field",
    "password_field",
    "extra_fields",
}


def load_market_metadata(path) -> MarketMetadata:
    """Parse a market metadata JSON file; unknown keys warn, bad shape raises."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"market metadata file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"market metadata is not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("market metadata must be a JSON object")

    for key in doc.keys() - _METADATA_KEYS:
        log.warning("market metadata: ignoring unknown field %r", key)

    links = doc.get("starting_links") or []
    if not isinstance(links, list) or not links:
        raise ConfigurationError("starting_links must be non-empty")

    credentials = None
    raw_cred = doc.get("credentials")
    if raw_cred:
        if not isinstance(raw_cred, dict):
            raise ConfigurationError("credentials must be an object")
        for key in raw_cred.keys() - _CREDENTIAL_KEYS:
            log.warning("market metadata: ignoring unknown credentials field %r", key)
        try:
            credentials = Credentials(
                username=raw_cred.get("username", ""),
                password=raw_cred.get("password", ""),
                login_path=raw_cred.get("login_path", ""),
                username_field=raw_cred.get("username_field", "username"),
                password_field=raw_cred.get("password_field", "password"),
                extra_fields=dict(raw_cred.get("extra_fields") or {}),
            )
        except TypeError as exc:
            raise ConfigurationError(f"malformed credentials block: {exc}") from exc

    cookies = []
    for raw in doc.get("cookies") or []:
        if not isinstance(raw, dict) or not raw.get("name"):
            raise ConfigurationError(f"malformed cookie entry: {raw!r}")
        cookies.append(
            CookieSpec(
                name=raw["name"],
                value=raw.get("value", ""),
                domain=raw.get("domain", ""),
                path=raw.get("path", "/"),
                source="manual",
            )
        )

    return MarketMetadata(
        market_name=doc.get("market_name", path.stem),
        starting_links=tuple(str(link) for link in links),
        credentials=credentials,
        cookies=tuple(cookies),
        captcha_hints=tuple(doc.get("captcha_hints") or []),
        expected_home_marker=doc.get("expected_home_marker", ""),
    )


@dataclass(frozen=True)
class CrawlConfig:
    """Everything a crawl run needs besides the market dossier.

    None means "unlimited" for the stop-criteria fields; at least one of
    max_depth / max_links / time_limit / target_links must be bounded or the
    crawl could never terminate.
    """

    max_depth: Optional[int] = None
    max_links: Optional[int] = None
    time_limit_s: Optional[float] = None
    target_links: Optional[frozenset[CanonicalUrl]] = None
    proxy: Optional[str] = None
    user_agents: tuple[str, ...] = tuple(DEFAULT_USER_AGENTS)
    request_timeout_s: float = DEFAULT_REQUEST_TIMEOUT_S
    retries: int = DEFAULT_RETRIES
    backoff_base_s: float = 0.25
    politeness_delay_s: float = DEFAULT_POLITENESS_DELAY_S
    rng_seed: int = DEFAULT_RNG_SEED
    output_dir: str = "crawl-out"
    workers: int = 1
    rotate_every: int = DEFAULT_ROTATE_EVERY
    captcha_policy: str = "abandon"  # abandon | fail | prompt | script:<file>
    captcha_timeout_s: float = DEFAULT_CAPTCHA_TIMEOUT_S
    api_port: Optional[int] = None


ValidatedConfig = CrawlConfig


def validate_config(cfg: CrawlConfig) -> ValidatedConfig:
    """Check invariants and fill defaults; raises ConfigurationError otherwise."""
    bounded = (
        cfg.max_depth is not None
        or cfg.max_links is not None
        or cfg.time_limit_s is not None
        or (cfg.target_links is not None and len(cfg.target_links) > 0)
    )
    if not bounded:
        raise ConfigurationError(
            "non-terminating configuration: set at least one of "
            "max_depth, max_links, time_limit, or a targets file"
        )
    if cfg.max_depth is not None and cfg.max_depth < 0:
        raise ConfigurationError("max_depth must be >= 0")
    if cfg.max_links is not None and cfg.max_links < 1:
        raise ConfigurationError("max_links must be >= 1")
    if cfg.time_limit_s is not None and cfg.time_limit_s < 0:
        raise ConfigurationError("time_limit must be >= 0")
    if cfg.workers < 1:
        raise ConfigurationError("workers must be >= 1")
    if cfg.retries < 0:
        raise ConfigurationError("retries must be >= 0")
    if cfg.request_timeout_s <= 0:
        raise ConfigurationError("request_timeout must be > 0")
    if cfg.politeness_delay_s < 0:
        raise ConfigurationError("politeness_delay must be >= 0")
    if cfg.rotate_every < 1:
        raise ConfigurationError("rotate_every must be >= 1")
    if not cfg.user_agents:
        cfg = replace(cfg, user_agents=tuple(DEFAULT_USER_AGENTS))
    policy = cfg.captcha_policy
    if policy not in ("abandon", "fail", "prompt") and not policy.startswith("script:"):
        raise ConfigurationError(f"unknown captcha policy: {policy!r}")
    return cfg


def load_targets_file(path) -> frozenset[CanonicalUrl]:
    """Read one URL per line; blank lines and #-comments are skipped."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"targets file not found: {path}")
    targets = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        url = normalize_url(line)
        if url is None:
            raise ConfigurationError(f"targets file contains an unusable URL: {line!r}")
        targets.add(url)
    if not targets:
        raise ConfigurationError(f"targets file is empty: {path}")
    return frozenset(targets)
