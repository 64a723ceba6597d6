"""Breadth-first crawler for gated marketplaces, plus its evaluation harness."""

from .config import CookieSpec, CrawlConfig, MarketMetadata, load_market_metadata, validate_config
from .engine import CrawlEngine, CrawlSummary, crawl
from .frontier import CanonicalUrl, Frontier, normalize_url
from .metrics import AggregateReport, RunMetrics, compute_run_metrics

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "CanonicalUrl",
    "CookieSpec",
    "CrawlConfig",
    "CrawlEngine",
    "CrawlSummary",
    "Frontier",
    "MarketMetadata",
    "RunMetrics",
    "compute_run_metrics",
    "crawl",
    "load_market_metadata",
    "normalize_url",
    "validate_config",
]
