import threading
import time

import pytest
import requests

from darkcrawler.captcha import (
    STATE_ABANDONED,
    STATE_PENDING,
    STATE_SOLVED,
    CaptchaChallenge,
    ChallengeRegistry,
    ChallengeSolution,
    UnknownChallenge,
    detect_captcha,
    load_script_solver,
    solution_from_script,
)
from darkcrawler.config import CookieSpec
from darkcrawler.frontier import normalize_url
from darkcrawler.mockmarket import SiteSpec

URL = normalize_url("http://m.onion/p/7")


def test_detect_builtin_input_pattern():
    body = b'<html><form action="/verify"><input name="captcha"></form></html>'
    challenge = detect_captcha(body, URL, ())
    assert challenge is not None
    assert challenge.matched_pattern == "captcha"
    assert challenge.state == STATE_PENDING
    assert challenge.form_action.path == "/verify"
    assert "captcha" in challenge.form_fields


def test_detect_builtin_text_patterns():
    assert detect_captcha(b"<p>Are You Human?</p>", URL, ()) is not None
    assert detect_captcha(b"<p>security check in progress</p>", URL, ()) is not None


def test_detect_market_hint():
    body = b"<p>please pass the turnstile gate</p>"
    assert detect_captcha(body, URL, ()) is None
    challenge = detect_captcha(body, URL, ("turnstile",))
    assert challenge is not None
    assert challenge.matched_pattern == "turnstile"


def test_ordinary_page_not_flagged():
    body = b"<html><body><h1>Listing 5</h1><a href='/p/6'>next</a></body></html>"
    assert detect_captcha(body, URL, ()) is None


def test_detect_on_mockmarket_wall(market_factory):
    market = market_factory(
        SiteSpec(page_count=3, branching=1, seed=3, captcha_pages=frozenset({1}))
    )
    body = requests.get(f"{market.base_url}/p/1", timeout=5).content
    url = normalize_url(f"{market.base_url}/p/1")
    challenge = detect_captcha(body, url, ())
    assert challenge is not None
    assert [u.path for u in challenge.image_refs] == ["/captcha.png"]
    assert challenge.form_action.path == "/p/1"
    assert challenge.page_excerpt.startswith("<!doctype html>")


def test_excerpt_capped_at_4096():
    body = b"captcha " + b"x" * 10_000
    challenge = detect_captcha(body, URL, ())
    assert len(challenge.page_excerpt) == 4096


def test_solution_exactly_one_of_fields_or_cookie():
    with pytest.raises(ValueError):
        ChallengeSolution("ch-1")
    with pytest.raises(ValueError):
        ChallengeSolution("ch-1", fields={"a": "1"}, cookie=CookieSpec("s", "v"))
    assert ChallengeSolution("ch-1", fields={"a": "1"}).fields == {"a": "1"}
    assert ChallengeSolution("ch-1", cookie=CookieSpec("s", "v")).cookie is not None


def fresh_challenge():
    return detect_captcha(b"<p>captcha</p><form action='/x'><input name='answer'></form>", URL, ())


def test_registry_submit_and_await():
    registry = ChallengeRegistry()
    challenge = registry.open(fresh_challenge())

    def solve_later():
        time.sleep(0.05)
        registry.submit(ChallengeSolution(challenge.id, fields={"answer": "9"}))

    threading.Thread(target=solve_later).start()
    solution = registry.await_solution(challenge, timeout_s=2.0)
    assert solution is not None
    assert solution.fields == {"answer": "9"}
    assert challenge.state == STATE_SOLVED


def test_registry_timeout_abandons():
    registry = ChallengeRegistry()
    challenge = registry.open(fresh_challenge())
    solution = registry.await_solution(challenge, timeout_s=0.05)
    assert solution is None
    assert challenge.state == STATE_ABANDONED


def test_duplicate_solution_rejected_idempotent_state():
    registry = ChallengeRegistry()
    challenge = registry.open(fresh_challenge())
    registry.submit(ChallengeSolution(challenge.id, fields={"a": "1"}))
    with pytest.raises(ValueError, match="already solved"):
        registry.submit(ChallengeSolution(challenge.id, fields={"a": "2"}))
    assert registry.solution_for(challenge.id).fields == {"a": "1"}
    assert challenge.state == STATE_SOLVED


def test_unknown_challenge_rejected():
    registry = ChallengeRegistry()
    with pytest.raises(UnknownChallenge):
        registry.submit(ChallengeSolution("ch-nope", fields={"a": "1"}))
    with pytest.raises(UnknownChallenge):
        registry.get("ch-nope")


def test_script_solver_roundtrip(tmp_path):
    script = tmp_path / "solve.py"
    script.write_text(
        "def solve(challenge):\n"
        "    page_id = int(str(challenge.url).rsplit('/', 1)[1])\n"
        "    return {'answer': str(page_id % 97)}\n",
        encoding="utf-8",
    )
    solver = load_script_solver(str(script))
    challenge = fresh_challenge()
    solution = solution_from_script(solver, challenge)
    assert solution.fields == {"answer": "7"}


def test_script_solver_none_means_abandon(tmp_path):
    script = tmp_path / "solve.py"
    script.write_text("def solve(challenge):\n    return None\n", encoding="utf-8")
    solver = load_script_solver(str(script))
    assert solution_from_script(solver, fresh_challenge()) is None


def test_script_without_solve_rejected(tmp_path):
    script = tmp_path / "bad.py"
    script.write_text("x = 1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="must define solve"):
        load_script_solver(str(script))


def test_challenge_ids_unique():
    ids = {fresh_challenge().id for _ in range(25)}
    assert len(ids) == 25


def test_prompt_reads_field_lines(monkeypatch):
    from darkcrawler.captcha import prompt_for_solution

    answers = iter(["answer=42", "extra=x", ""])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
    solution = prompt_for_solution(fresh_challenge())
    assert solution.fields == {"answer": "42", "extra": "x"}


def test_prompt_reads_cookie_paste(monkeypatch):
    from darkcrawler.captcha import prompt_for_solution

    monkeypatch.setattr("builtins.input", lambda prompt="": "cookie:session=tok99")
    solution = prompt_for_solution(fresh_challenge())
    assert solution.cookie.name == "session"
    assert solution.cookie.value == "tok99"


def test_prompt_empty_input_abandons(monkeypatch):
    from darkcrawler.captcha import prompt_for_solution

    monkeypatch.setattr("builtins.input", lambda prompt="": "")
    assert prompt_for_solution(fresh_challenge()) is None
