"""HTTP(S) fetching with proxy support, UA rotation, and status classification.

Redirects are followed manually (never by the HTTP library) so every hop is
recorded and cross-host hops can be refused: requests must never leave the
crawl scope except toward the proxy itself. Onion hosts are only reachable
through a proxy that resolves names remotely (socks5h), because .onion names
do not exist in DNS.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence
from urllib.parse import urlencode

import requests

from .config import CookieSpec
from .errors import ConfigurationError
from .frontier import CanonicalUrl, normalize_url

REDIRECT_LIMIT = 5
_REDIRECT_CODES = {301, 302, 303, 307, 308}

STATUS_OK = "Ok"
STATUS_NOT_FOUND = "NotFound"
STATUS_UNAVAILABLE = "Unavailable"
STATUS_OTHER = "OtherError"


def classify_status(code: int) -> str:
    """200 -> Ok, 404 -> NotFound, 503 -> Unavailable, everything else Other."""
    if code == 200:
        return STATUS_OK
    if code == 404:
        return STATUS_NOT_FOUND
    if code == 503:
        return STATUS_UNAVAILABLE
    return STATUS_OTHER


@dataclass(frozen=True)
class ProxyEndpoint:
    """Parsed proxy string. remote_dns means the proxy resolves hostnames."""

    protocol: str  # socks5 | http
    host: str
    port: int
    remote_dns: bool = False

    @property
    def url(self) -> str:
        scheme = self.protocol
        if self.protocol == "socks5" and self.remote_dns:
            scheme = "socks5h"
        return f"{scheme}://{self.host}:{self.port}"


def parse_proxy(spec: str) -> ProxyEndpoint:
    """Accepts socks5h://host:port, socks5://host:port, or http://host:port."""
    try:
        scheme, rest = spec.split("://", 1)
    except ValueError:
        raise ConfigurationError(f"proxy must look like scheme://host:port, got {spec!r}")
    scheme = scheme.lower()
    host, _, port_s = rest.rstrip("/").rpartition(":")
    if not host or not port_s.isdigit():
        raise ConfigurationError(f"proxy must carry an explicit port: {spec!r}")
    port = int(port_s)
    if scheme in ("socks5", "socks5h"):
        return ProxyEndpoint("socks5", host, port, remote_dns=scheme.endswith("h"))
    if scheme == "http":
        return ProxyEndpoint("http", host, port, remote_dns=False)
    raise ConfigurationError(f"unsupported proxy scheme: {scheme!r}")


class UserAgentRotator:
    """Seeded uniform pick over the configured agent list, one per request."""

    def __init__(self, agents: Sequence[str], seed: int):
        if not agents:
            raise ConfigurationError("user agent list must be non-empty")
        self.agents = tuple(agents)
        self._rng = random.Random(seed)

    def next_user_agent(self) -> str:
        return self._rng.choice(self.agents)


def next_user_agent(rotator: UserAgentRotator) -> str:
    return rotator.next_user_agent()


@dataclass(frozen=True)
class RedirectHop:
    status: int
    location: CanonicalUrl


@dataclass
class FetchResult:
    """Outcome of one logical fetch, redirects and retries included."""

    url: CanonicalUrl
    final_status: int
    status_class: str
    body: bytes = b""
    redirect_chain: tuple[RedirectHop, ...] = ()
    elapsed_s: float = 0.0
    user_agent_used: str = ""
    attempt_count: int = 1
    cookies_set: dict = field(default_factory=dict)
    content_type: str = ""
    error: Optional[str] = None

    @property
    def final_url(self) -> CanonicalUrl:
        return self.redirect_chain[-1].location if self.redirect_chain else self.url

    @property
    def ok(self) -> bool:
        return self.status_class == STATUS_OK


@dataclass(frozen=True)
class TransportSettings:
    timeout_s: float = 30.0
    retries: int = 2
    backoff_base_s: float = 0.25
    proxy: Optional[ProxyEndpoint] = None


def _cookie_header(cookies: Sequence[CookieSpec]) -> str:
    return "; ".join(c.header_pair() for c in cookies)


def _proxies_dict(proxy: Optional[ProxyEndpoint]) -> Optional[dict]:
    if proxy is None:
        return None
    if proxy.protocol == "socks5":
        try:
            import socks  # noqa: F401  (pysocks backs requests' socks support)
        except ImportError:
            raise ConfigurationError(
                "socks proxy configured but pysocks is not installed "
                "(pip install darkcrawler[socks])"
            )
    return {"http": proxy.url, "https": proxy.url}


def fetch(
    url: CanonicalUrl,
    cookies: Sequence[CookieSpec] = (),
    rotator: Optional[UserAgentRotator] = None,
    settings: TransportSettings = TransportSettings(),
    method: str = "GET",
    form_data: Optional[Sequence[tuple[str, str]]] = None,
) -> FetchResult:
    """Issue one request, following same-host redirects up to REDIRECT_LIMIT.

    503 and transport-level failures are retried with exponential backoff
    (backoff_base * 2^attempt); 404 and other statuses are terminal. POSTs
    send `form_data` urlencoded in the given order and downgrade to GET on
    the first redirect hop.
    """
    if url.is_onion and settings.proxy is None:
        raise ConfigurationError(
            f"onion host {url.host} requires a proxy: .onion names are not DNS-resolvable"
        )
    proxies = _proxies_dict(settings.proxy)
    user_agent = rotator.next_user_agent() if rotator else ""
    headers = {"Accept": "text/html"}
    if user_agent:
        headers["User-Agent"] = user_agent
    if cookies:
        headers["Cookie"] = _cookie_header(cookies)

    started = time.monotonic()
    attempts = 0
    last_error = None
    while attempts <= settings.retries:
        attempts += 1
        result = _fetch_once(url, headers, proxies, settings.timeout_s, method, form_data)
        if result.status_class == STATUS_UNAVAILABLE or (
            result.final_status == 0 and result.error and result.error.startswith("transport:")
        ):
            last_error = result
            if attempts <= settings.retries:
                time.sleep(settings.backoff_base_s * (2 ** (attempts - 1)))
            continue
        last_error = result
        break

    result = last_error
    result.elapsed_s = time.monotonic() - started
    result.user_agent_used = user_agent
    result.attempt_count = attempts
    return result


def _fetch_once(url, headers, proxies, timeout_s, method, form_data):
    """One request plus its manual redirect walk; no retries here."""
    chain: list[RedirectHop] = []
    cookies_set: dict = {}
    current = url
    current_method = method
    body_pairs = list(form_data) if form_data else None

    for _ in range(REDIRECT_LIMIT + 1):
        request_headers = dict(headers)
        data = None
        if current_method == "POST" and body_pairs is not None:
            data = urlencode(body_pairs)
            request_headers["Content-Type"] = "application/x-www-form-urlencoded"
        try:
            resp = requests.request(
                current_method,
                str(current),
                headers=request_headers,
                data=data,
                proxies=proxies,
                timeout=timeout_s,
                allow_redirects=False,
            )
        except requests.RequestException as exc:
            return FetchResult(
                url=url,
                final_status=0,
                status_class=STATUS_OTHER,
                redirect_chain=tuple(chain),
                cookies_set=cookies_set,
                error=f"transport: {exc.__class__.__name__}: {exc}",
            )
        for cookie in resp.cookies:
            cookies_set[cookie.name] = cookie.value

        if resp.status_code in _REDIRECT_CODES:
            location = normalize_url(resp.headers.get("Location", ""), base=current)
            if location is None:
                return FetchResult(
                    url=url,
                    final_status=0,
                    status_class=STATUS_OTHER,
                    redirect_chain=tuple(chain),
                    cookies_set=cookies_set,
                    error="redirect without a usable Location header",
                )
            if location.host != url.host:
                # Do not follow off-host: the request would leave crawl scope.
                return FetchResult(
                    url=url,
                    final_status=0,
                    status_class=STATUS_OTHER,
                    redirect_chain=tuple(chain),
                    cookies_set=cookies_set,
                    error=f"cross-host redirect to {location.host}",
                )
            chain.append(RedirectHop(resp.status_code, location))
            if len(chain) > REDIRECT_LIMIT:
                return FetchResult(
                    url=url,
                    final_status=0,
                    status_class=STATUS_OTHER,
                    redirect_chain=tuple(chain[:REDIRECT_LIMIT]),
                    cookies_set=cookies_set,
                    error="redirect limit exceeded",
                )
            current = location
            current_method = "GET"
            body_pairs = None
            continue

        return FetchResult(
            url=url,
            final_status=resp.status_code,
            status_class=classify_status(resp.status_code),
            body=resp.content,
            redirect_chain=tuple(chain),
            cookies_set=cookies_set,
            content_type=resp.headers.get("Content-Type", ""),
        )

    raise AssertionError("unreachable: redirect loop is bounded")


def detect_unexpected_redirect(
    requested: CanonicalUrl,
    chain: Sequence[RedirectHop],
    login_path: Optional[str] = None,
    hint_markers: Sequence[str] = (),
) -> bool:
    """True when a fetch landed somewhere other than the intended page.

    A login-path or captcha-marker destination is always flagged; otherwise
    any final path differing from the requested one counts (the trailing-slash
    self-hop case compares equal after canonicalization and passes).
    """
    if not chain:
        return False
    final = chain[-1].location
    if login_path and final.path == normalize_url(login_path, base=requested).path:
        return True
    lowered = final.path.lower()
    for marker in hint_markers:
        if marker and marker.lower() in lowered:
            return True
    return final.path != requested.path or final.host != requested.host
