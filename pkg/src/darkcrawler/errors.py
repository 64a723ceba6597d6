"""Exception hierarchy shared across the crawler.

Each fatal class maps to a CLI exit code so scripted runs can tell apart
bad configuration, unreachable markets, and storage trouble.
"""


class CrawlerError(Exception):
    """Base class for all crawler-raised errors."""

    exit_code = 1


class ConfigurationError(CrawlerError):
    """Invalid config/metadata, or an operation used against its preconditions."""

    exit_code = 2


class NoValidStartingLink(CrawlerError):
    """Every starting link probed dead, or the security layer rejected us."""

    exit_code = 3


class StorageError(CrawlerError):
    """Page store or manifest write failed; the crawl must abort."""

    exit_code = 4


class LoginFailed(CrawlerError):
    """Login POST could not complete at the transport level."""


class LoginRejected(CrawlerError):
    """Server answered but granted no usable session.

    `captcha_suspected` is set when the login response carries captcha
    markers, so callers can report the wall distinctly from bad credentials.
    """

    def __init__(self, message, captcha_suspected=False):
        super().__init__(message)
        self.captcha_suspected = captcha_suspected
