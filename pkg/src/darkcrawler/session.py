"""Session cookies: automated form login, rotation order, and validation.

Rotation order comes from a Fisher-Yates shuffle over the pooled jar
(manual and login-minted cookies alike), so the order every run walks the
jar in is uniform over all permutations yet reproducible from the seed.
"""
from __future__ import annotations

import logging
import random
from typing import Optional, Sequence

from .captcha import detect_captcha
from .config import CookieSpec, MarketMetadata
from .errors import ConfigurationError, LoginFailed, LoginRejected
from .frontier import CanonicalUrl, normalize_url
from .transport import (
    STATUS_OK,
    FetchResult,
    TransportSettings,
    UserAgentRotator,
    detect_unexpected_redirect,
    fetch,
)

log = logging.getLogger(__name__)


def fisher_yates(items: list, rng: random.Random) -> None:
    """In-place Fisher-Yates: walk i from the top, swap with uniform j <= i."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.randint(0, i)
        items[i], items[j] = items[j], items[i]


class CookieJar:
    """Ordered cookie pool walked in a shuffled rotation order."""

    def __init__(self, cookies: Sequence[CookieSpec] = (), seed: int = 0):
        self.cookies: list[CookieSpec] = list(cookies)
        self.rng = random.Random(seed)
        self.rotation_order: list[int] = list(range(len(self.cookies)))
        self.cursor: int = 0
        self.failed: set[int] = set()

    def __len__(self) -> int:
        return len(self.cookies)

    def add(self, cookie: CookieSpec) -> None:
        """Append a cookie and queue it at the end of the current rotation."""
        self.cookies.append(cookie)
        self.rotation_order.append(len(self.cookies) - 1)

    def shuffle_rotation(self) -> None:
        """Re-deal the rotation order (Fisher-Yates) and restart the walk."""
        order = list(range(len(self.cookies)))
        fisher_yates(order, self.rng)
        self.rotation_order = order
        self.cursor = 0

    def current_cookie(self) -> Optional[CookieSpec]:
        if self.cursor >= len(self.rotation_order):
            return None
        return self.cookies[self.rotation_order[self.cursor]]

    def advance(self) -> Optional[CookieSpec]:
        """Move to the next cookie in rotation order; None once exhausted."""
        if self.cursor < len(self.rotation_order):
            self.cursor += 1
        return self.current_cookie()

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.rotation_order)

    def mark_failed(self, cookie_index: int) -> None:
        self.failed.add(cookie_index)

    def mark_current_failed(self) -> None:
        if self.cursor < len(self.rotation_order):
            self.failed.add(self.rotation_order[self.cursor])

    def skip_failed(self) -> None:
        """Move past recently-failed cookies while an unfailed one remains.

        When every pooled cookie has failed there is no validated alternative
        to prefer, so the cursor stays put and the walk continues as dealt.
        """
        if all(idx in self.failed for idx in self.rotation_order):
            return
        while (
            self.cursor < len(self.rotation_order)
            and self.rotation_order[self.cursor] in self.failed
        ):
            self.cursor += 1

    def move_to(self, cookie_index: int) -> None:
        """Point the rotation at the given cookie (freshly minted logins)."""
        for pos, idx in enumerate(self.rotation_order):
            if idx == cookie_index:
                self.cursor = pos
                return


def shuffle_rotation(jar: CookieJar) -> CookieJar:
    jar.shuffle_rotation()
    return jar


def current_cookie(jar: CookieJar) -> Optional[CookieSpec]:
    return jar.current_cookie()


def login(
    meta: MarketMetadata,
    base: CanonicalUrl,
    settings: TransportSettings,
    rotator: Optional[UserAgentRotator] = None,
) -> CookieSpec:
    """Form-POST the configured credentials and prove the session works.

    Success needs both a Set-Cookie from the login exchange and the
    expected_home_marker on a follow-up GET of `base`: a 200 on a re-rendered
    login form is indistinguishable from success by status alone.
    """
    if meta.credentials is None:
        raise ConfigurationError("no credentials configured for this market")
    cred = meta.credentials
    login_url = normalize_url(cred.login_path, base=base)
    if login_url is None:
        raise ConfigurationError(f"unusable login_path: {cred.login_path!r}")
    if login_url.host != base.host:
        raise ConfigurationError(
            f"refusing to send credentials off-host: {login_url.host} != {base.host}"
        )

    form = [(cred.username_field, cred.username), (cred.password_field, cred.password)]
    form.extend(cred.extra_fields.items())
    response = fetch(login_url, rotator=rotator, settings=settings, method="POST", form_data=form)
    if response.final_status == 0:
        raise LoginFailed(f"login POST failed: {response.error}")

    if not response.cookies_set:
        captcha = detect_captcha(response.body, login_url, meta.captcha_hints)
        if captcha is not None:
            raise LoginRejected(
                f"login blocked by a captcha wall (matched {captcha.matched_pattern!r})",
                captcha_suspected=True,
            )
        raise LoginRejected("credentials rejected: server granted no session cookie")

    name, value = next(iter(response.cookies_set.items()))
    cookie = CookieSpec(name=name, value=value, domain=base.host, path="/", source="login")

    if meta.expected_home_marker:
        probe = fetch(base, cookies=[cookie], rotator=rotator, settings=settings)
        if meta.expected_home_marker.encode() not in probe.body:
            captcha = detect_captcha(probe.body, base, meta.captcha_hints)
            if captcha is not None:
                raise LoginRejected(
                    "post-login page is a captcha wall, marker not found",
                    captcha_suspected=True,
                )
            raise LoginRejected(
                f"post-login page lacks marker {meta.expected_home_marker!r}"
            )
    log.info("login succeeded, session cookie %s obtained", cookie.name)
    return cookie


def validate_cookie(
    cookie: CookieSpec,
    probe: CanonicalUrl,
    login_path: Optional[str],
    settings: TransportSettings,
    rotator: Optional[UserAgentRotator] = None,
    hint_markers: Sequence[str] = (),
) -> tuple[bool, str]:
    """Fetch the protected probe page with only this cookie.

    Returns (valid, cause). Transient trouble (503, timeouts) reports
    cause="transient" and does not condemn the cookie; only an unexpected
    redirect marks it dead.
    """
    result: FetchResult = fetch(probe, cookies=[cookie], rotator=rotator, settings=settings)
    if detect_unexpected_redirect(probe, result.redirect_chain, login_path, hint_markers):
        return False, "unexpected-redirect"
    if result.status_class != STATUS_OK:
        return False, "transient"
    return True, "ok"
