"""Captcha detection and the blocking human-intervention broker.

Detection is pattern-based only: a challenge opens when a hint substring or
a captcha-named form input shows up in a fetched page. Solving is left to a
person (console/API/prompt) or a scripted stand-in; there is no solver here.
"""
from __future__ import annotations

import importlib.util
import itertools
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .config import CookieSpec
from .extractor import extract_image_refs, parse_page
from .frontier import CanonicalUrl, normalize_url

BUILTIN_PATTERNS = ("captcha", "are you human", "security check")

STATE_PENDING = "pending"
STATE_SOLVED = "solved"
STATE_ABANDONED = "abandoned"

EXCERPT_BYTES = 4096

_challenge_counter = itertools.count(1)


@dataclass
class CaptchaChallenge:
    id: str
    url: CanonicalUrl
    matched_pattern: str
    page_excerpt: str
    image_refs: tuple[CanonicalUrl, ...]
    created_at: float
    state: str = STATE_PENDING
    form_action: Optional[CanonicalUrl] = None
    form_fields: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "url": str(self.url),
            "matched_pattern": self.matched_pattern,
            "page_excerpt": self.page_excerpt,
            "image_refs": [str(u) for u in self.image_refs],
            "created_at": self.created_at,
            "state": self.state,
            "form_fields": list(self.form_fields),
        }


@dataclass(frozen=True)
class ChallengeSolution:
    """Either form fields to submit or a solved-session cookie, never both."""

    challenge_id: str
    fields: dict = field(default_factory=dict)
    cookie: Optional[CookieSpec] = None

    def __post_init__(self):
        if bool(self.fields) == (self.cookie is not None):
            raise ValueError("a solution carries exactly one of fields / cookie")


def detect_captcha(
    body: bytes,
    url: CanonicalUrl,
    hints: Sequence[str] = (),
) -> Optional[CaptchaChallenge]:
    """Return a pending challenge when the page smells like a captcha wall.

    Matches case-insensitive substrings from the market hints plus built-in
    defaults, or any form carrying an input whose name mentions captcha.
    """
    text = body.decode("utf-8", errors="replace")
    lowered = text.lower()
    matched = None
    for pattern in tuple(hints) + BUILTIN_PATTERNS:
        if pattern and pattern.lower() in lowered:
            matched = pattern
            break
    parsed = parse_page(body)
    if matched is None:
        for form in parsed.forms:
            if any("captcha" in name.lower() for name in form["inputs"]):
                matched = "captcha"
                break
    if matched is None:
        return None

    # Prefer the form holding the challenge answer for later submission.
    action = None
    fields: tuple[str, ...] = ()
    if parsed.forms:
        form = parsed.forms[0]
        action = normalize_url(form["action"], base=url) or url
        fields = tuple(form["inputs"])

    return CaptchaChallenge(
        id=f"ch-{next(_challenge_counter):04d}",
        url=url,
        matched_pattern=matched,
        page_excerpt=text[:EXCERPT_BYTES],
        image_refs=tuple(extract_image_refs(body, url)),
        created_at=time.time(),
        form_action=action,
        form_fields=fields,
    )


class UnknownChallenge(KeyError):
    pass


class ChallengeRegistry:
    """Serialized shared registry; one pending wall never blocks the others."""

    def __init__(self):
        self._lock = threading.Lock()
        self._challenges: dict[str, CaptchaChallenge] = {}
        self._solutions: dict[str, ChallengeSolution] = {}
        self._events: dict[str, threading.Event] = {}

    def open(self, challenge: CaptchaChallenge) -> CaptchaChallenge:
        with self._lock:
            self._challenges[challenge.id] = challenge
            self._events[challenge.id] = threading.Event()
        return challenge

    def get(self, challenge_id: str) -> CaptchaChallenge:
        with self._lock:
            try:
                return self._challenges[challenge_id]
            except KeyError:
                raise UnknownChallenge(f"unknown challenge {challenge_id!r}")

    def pending(self) -> list[CaptchaChallenge]:
        with self._lock:
            return [c for c in self._challenges.values() if c.state == STATE_PENDING]

    def all(self) -> list[CaptchaChallenge]:
        with self._lock:
            return list(self._challenges.values())

    def submit(self, solution: ChallengeSolution) -> None:
        """Accept a solution for a pending challenge; duplicates are rejected."""
        with self._lock:
            challenge = self._challenges.get(solution.challenge_id)
            if challenge is None:
                raise UnknownChallenge(f"unknown challenge {solution.challenge_id!r}")
            if challenge.state != STATE_PENDING:
                raise ValueError(f"challenge {challenge.id} is already {challenge.state}")
            self._solutions[solution.challenge_id] = solution
            challenge.state = STATE_SOLVED
            self._events[solution.challenge_id].set()

    def abandon(self, challenge_id: str) -> None:
        with self._lock:
            challenge = self._challenges.get(challenge_id)
            if challenge is None:
                raise UnknownChallenge(f"unknown challenge {challenge_id!r}")
            if challenge.state == STATE_PENDING:
                challenge.state = STATE_ABANDONED
                self._events[challenge_id].set()

    def solution_for(self, challenge_id: str) -> Optional[ChallengeSolution]:
        with self._lock:
            return self._solutions.get(challenge_id)

    def poll(self, challenge_id: str) -> Optional[ChallengeSolution]:
        """Non-blocking: the solution if one landed, else None."""
        challenge = self.get(challenge_id)
        if challenge.state == STATE_SOLVED:
            return self.solution_for(challenge_id)
        return None

    def await_solution(
        self, challenge: CaptchaChallenge, timeout_s: float
    ) -> Optional[ChallengeSolution]:
        """Block the calling fetch path until solved or timeout (-> abandoned)."""
        event = self._events[challenge.id]
        if not event.wait(timeout=timeout_s):
            self.abandon(challenge.id)
            return None
        if challenge.state == STATE_SOLVED:
            return self.solution_for(challenge.id)
        return None


def await_solution(
    registry: ChallengeRegistry, challenge: CaptchaChallenge, timeout_s: float
) -> Optional[ChallengeSolution]:
    return registry.await_solution(challenge, timeout_s)


SolverFn = Callable[[CaptchaChallenge], Optional[object]]


def load_script_solver(path: str) -> SolverFn:
    """Load `solve(challenge)` from a Python file for headless intervention.

    The callable may return a dict of form fields, a CookieSpec, or None to
    abandon the challenge.
    """
    spec = importlib.util.spec_from_file_location("darkcrawler_captcha_script", path)
    if spec is None or spec.loader is None:
        raise ValueError(f"cannot load captcha script {path!r}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    solver = getattr(module, "solve", None)
    if not callable(solver):
        raise ValueError(f"captcha script {path!r} must define solve(challenge)")
    return solver


def solution_from_script(
    solver: SolverFn, challenge: CaptchaChallenge
) -> Optional[ChallengeSolution]:
    answer = solver(challenge)
    if answer is None:
        return None
    if isinstance(answer, CookieSpec):
        return ChallengeSolution(challenge.id, cookie=answer)
    if isinstance(answer, dict):
        return ChallengeSolution(challenge.id, fields={str(k): str(v) for k, v in answer.items()})
    raise ValueError(f"captcha script returned unsupported type {type(answer).__name__}")


def prompt_for_solution(challenge: CaptchaChallenge) -> Optional[ChallengeSolution]:
    """Terminal fallback: read `field=value` lines, or `cookie:name=value`.

    An empty line finishes field entry; EOF or no input abandons.
    """
    print(f"[captcha] challenge {challenge.id} at {challenge.url}")
    print(f"[captcha] matched pattern: {challenge.matched_pattern!r}")
    excerpt = challenge.page_excerpt[:400].replace("\n", " ")
    print(f"[captcha] page excerpt: {excerpt}")
    if challenge.image_refs:
        print(f"[captcha] challenge images: {', '.join(str(u) for u in challenge.image_refs)}")
    print("[captcha] enter field=value lines (empty line ends), or cookie:name=value")
    fields: dict[str, str] = {}
    try:
        while True:
            line = input("> ").strip()
            if not line:
                break
            if line.startswith("cookie:"):
                name, _, value = line[len("cookie:"):].partition("=")
                cookie = CookieSpec(name=name.strip(), value=value.strip(), source="manual")
                return ChallengeSolution(challenge.id, cookie=cookie)
            key, sep, value = line.partition("=")
            if not sep:
                print("[captcha] expected field=value")
                continue
            fields[key.strip()] = value.strip()
    except EOFError:
        pass
    if not fields:
        return None
    return ChallengeSolution(challenge.id, fields=fields)
