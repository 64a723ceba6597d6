import math
import random
from collections import Counter
from itertools import permutations

import pytest

from conftest import login_meta_for, meta_for
from darkcrawler.config import CookieSpec, Credentials, MarketMetadata
from darkcrawler.errors import ConfigurationError, LoginRejected
from darkcrawler.frontier import normalize_url
from darkcrawler.mockmarket import HOME_MARKER, FaultRule, SiteSpec
from darkcrawler.session import CookieJar, fisher_yates, login, validate_cookie
from darkcrawler.transport import TransportSettings

FAST = TransportSettings(timeout_s=5.0, retries=1, backoff_base_s=0.002)


def jar_of(n, seed=42):
    return CookieJar([CookieSpec(f"c{i}", str(i)) for i in range(n)], seed=seed)


def test_shuffle_singleton():
    jar = jar_of(1)
    for _ in range(5):
        jar.shuffle_rotation()
        assert jar.rotation_order == [0]


def test_shuffle_golden_permutation():
    # frozen once from the seeded shuffle
    jar = jar_of(3, seed=42)
    jar.shuffle_rotation()
    assert jar.rotation_order == [1, 0, 2]
    jar.shuffle_rotation()
    assert jar.rotation_order == [2, 1, 0]


def test_shuffle_is_always_a_permutation():
    for seed in range(50):
        jar = jar_of(6, seed=seed)
        jar.shuffle_rotation()
        assert sorted(jar.rotation_order) == list(range(6))


def test_shuffle_resets_cursor():
    jar = jar_of(3)
    jar.shuffle_rotation()
    jar.advance()
    jar.shuffle_rotation()
    assert jar.cursor == 0


def test_fisher_yates_uniform_over_all_permutations():
    counts = Counter()
    for seed in range(24_000):
        order = list(range(4))
        fisher_yates(order, random.Random(seed))
        counts[tuple(order)] += 1
    assert set(counts) == set(permutations(range(4)))
    expected = 24_000 / 24
    sigma = math.sqrt(24_000 * (1 / 24) * (23 / 24))
    for permutation, count in counts.items():
        assert abs(count - expected) <= 3 * sigma, permutation


def test_current_cookie_walks_rotation_order():
    jar = jar_of(2)
    jar.shuffle_rotation()
    first = jar.current_cookie()
    assert first is jar.cookies[jar.rotation_order[0]]
    second = jar.advance()
    assert second is jar.cookies[jar.rotation_order[1]]
    assert jar.advance() is None
    assert jar.current_cookie() is None
    assert jar.exhausted


def test_skip_failed_prefers_unfailed_cookie():
    jar = jar_of(3)
    jar.shuffle_rotation()
    jar.mark_current_failed()
    jar.skip_failed()
    current = jar.current_cookie()
    assert current is not None
    failed_cookie = jar.cookies[jar.rotation_order[0]]
    assert current is not failed_cookie


def test_skip_failed_keeps_cursor_when_all_failed():
    jar = jar_of(2)
    jar.shuffle_rotation()
    for idx in range(2):
        jar.mark_failed(idx)
    jar.skip_failed()
    assert jar.current_cookie() is not None  # no validated alternative: keep going


def test_login_success_on_mock_market(market_factory):
    market = market_factory(SiteSpec(page_count=3, branching=1, seed=3, login_required=True))
    meta = login_meta_for(market)
    base = normalize_url(market.root_url)
    cookie = login(meta, base, FAST)
    assert cookie.source == "login"
    assert cookie.name == "session"
    assert cookie.value


def test_login_wrong_password_rejected(market_factory):
    market = market_factory(SiteSpec(page_count=3, branching=1, seed=3, login_required=True))
    meta = login_meta_for(market, password="nope")
    with pytest.raises(LoginRejected, match="no session cookie"):
        login(meta, normalize_url(market.root_url), FAST)


def test_login_without_credentials_is_precondition_error(market_factory):
    market = market_factory(SiteSpec(page_count=2, branching=1, seed=3))
    meta = meta_for(market)
    with pytest.raises(ConfigurationError, match="no credentials"):
        login(meta, normalize_url(market.root_url), FAST)


def test_login_never_posts_credentials_off_host():
    meta = MarketMetadata(
        market_name="m",
        starting_links=("http://host-a.example/",),
        credentials=Credentials(
            username="u", password="p", login_path="http://host-b.example/login"
        ),
    )
    with pytest.raises(ConfigurationError, match="off-host"):
        login(meta, normalize_url("http://host-a.example/"), FAST)


def test_login_field_order_is_username_password_extras(market_factory):
    market = market_factory(SiteSpec(page_count=2, branching=1, seed=3, login_required=True))
    meta = login_meta_for(market)
    meta = MarketMetadata(
        market_name=meta.market_name,
        starting_links=meta.starting_links,
        credentials=Credentials(
            username=market.spec.username,
            password=market.spec.password,
            login_path="/login",
            extra_fields={"csrf": "t0", "lang": "en"},
        ),
        expected_home_marker=HOME_MARKER,
    )
    login(meta, normalize_url(market.root_url), FAST)
    post = [e for e in market.requests_for("/login") if e["method"] == "POST"][-1]
    assert post["body"] == f"username={market.spec.username}&password={market.spec.password}&csrf=t0&lang=en"
    assert post["headers"]["Content-Type"] == "application/x-www-form-urlencoded"


def test_validate_cookie_accepts_live_session(market_factory):
    market = market_factory(SiteSpec(page_count=2, branching=1, seed=3, login_required=True))
    cookie = market.mint_session_cookie()
    ok, cause = validate_cookie(cookie, normalize_url(market.root_url), "/login", FAST)
    assert ok and cause == "ok"


def test_validate_cookie_flags_expired_session(market_factory):
    market = market_factory(SiteSpec(page_count=2, branching=1, seed=3, login_required=True))
    dead = CookieSpec("session", "never-minted")
    ok, cause = validate_cookie(dead, normalize_url(market.root_url), "/login", FAST)
    assert not ok and cause == "unexpected-redirect"


def test_validate_cookie_transient_on_503(market_factory):
    market = market_factory(
        SiteSpec(page_count=2, branching=1, seed=3,
                 fault_plan=(FaultRule(page=0, behavior="n_times_503", n=99),))
    )
    cookie = CookieSpec("session", "whatever")
    ok, cause = validate_cookie(
        cookie, normalize_url(market.root_url), "/login",
        TransportSettings(timeout_s=5.0, retries=0, backoff_base_s=0.002),
    )
    assert not ok and cause == "transient"
