import sys

import pytest

from darkcrawler.config import CrawlConfig, MarketMetadata
from darkcrawler.mockmarket import MockMarket, SiteSpec


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    outcome = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"[acceptance] {name}: {outcome}", file=sys.__stderr__, flush=True)


@pytest.fixture
def market_factory():
    """Start mock markets on ephemeral ports; everything stops at teardown."""
    started = []

    def _start(spec: SiteSpec, site=None) -> MockMarket:
        market = MockMarket(spec, site=site).start()
        started.append(market)
        return market

    yield _start
    for market in started:
        market.shutdown()


@pytest.fixture
def make_config(tmp_path):
    """CrawlConfig tuned for mock tests: no politeness delay, fast backoff."""
    counter = [0]

    def _make(**overrides) -> CrawlConfig:
        counter[0] += 1
        defaults = dict(
            max_depth=2,
            politeness_delay_s=0.0,
            backoff_base_s=0.002,
            request_timeout_s=5.0,
            output_dir=str(tmp_path / f"run{counter[0]}"),
            captcha_timeout_s=2.0,
        )
        defaults.update(overrides)
        return CrawlConfig(**defaults)

    return _make


def meta_for(market: MockMarket, **overrides) -> MarketMetadata:
    fields = dict(
        market_name="mock",
        starting_links=(market.root_url,),
    )
    fields.update(overrides)
    return MarketMetadata(**fields)


def login_meta_for(market: MockMarket, password=None, **overrides) -> MarketMetadata:
    from darkcrawler.config import Credentials
    from darkcrawler.mockmarket import HOME_MARKER

    fields = dict(
        market_name="mock-login",
        starting_links=(market.root_url,),
        credentials=Credentials(
            username=market.spec.username,
            password=password if password is not None else market.spec.password,
            login_path="/login",
        ),
        expected_home_marker=HOME_MARKER,
    )
    fields.update(overrides)
    return MarketMetadata(**fields)
