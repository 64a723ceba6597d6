import string
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkcrawler.frontier import CanonicalUrl, Frontier, is_internal, normalize_url


def test_normalize_lowercases_host_elides_port_strips_fragment():
    url = normalize_url("HTTP://EN.WIKIPEDIA.ORG:80/wiki/IOT#x")
    assert url == CanonicalUrl("http", "en.wikipedia.org", None, "/wiki/IOT")
    assert str(url) == "http://en.wikipedia.org/wiki/IOT"


def test_normalize_resolves_relative_against_base():
    base = normalize_url("http://en.wikipedia.org/wiki/IOT")
    url = normalize_url("/wiki/Crawler", base=base)
    assert str(url) == "http://en.wikipedia.org/wiki/Crawler"


def test_normalize_skips_unsupported_schemes():
    base = normalize_url("http://example.org/")
    assert normalize_url("javascript:void(0)", base=base) is None
    assert normalize_url("mailto:x@example.org", base=base) is None
    assert normalize_url("", base=base) is None
    assert normalize_url("http://") is None


def test_normalize_unifies_trailing_slash_but_keeps_root():
    assert normalize_url("http://x.onion/a/").path == "/a"
    assert normalize_url("http://x.onion/a").path == "/a"
    assert normalize_url("http://x.onion").path == "/"
    assert normalize_url("http://x.onion/").path == "/"


def test_normalize_resolves_dot_segments():
    assert normalize_url("http://h.example/a/b/../c/./d").path == "/a/c/d"


def test_normalize_preserves_query_verbatim():
    a = normalize_url("http://h.example/item?id=2&b=1")
    b = normalize_url("http://h.example/item?b=1&id=2")
    assert a != b  # query significant, not reordered
    assert a.query == "id=2&b=1"


def test_non_default_port_kept():
    url = normalize_url("http://h.example:8080/x")
    assert url.port == 8080
    assert str(url) == "http://h.example:8080/x"


def test_is_internal_exact_host_match():
    a = normalize_url("http://en.wikipedia.org/wiki/IOT")
    b = normalize_url("http://en.wikipedia.org/wiki/Crawler")
    c = normalize_url("http://de.wikipedia.org/x")
    assert is_internal(a, b)
    assert not is_internal(c, a)
    assert is_internal(normalize_url("http://x.onion/a"), normalize_url("http://x.onion/b"))


_url_text = st.text(alphabet=string.ascii_letters + string.digits + "/._-%?=&", max_size=40)


@given(
    scheme=st.sampled_from(["http", "https"]),
    host=st.from_regex(r"[a-z][a-z0-9-]{0,10}(\.[a-z]{2,6}){1,2}", fullmatch=True),
    path=_url_text,
    port=st.one_of(st.none(), st.integers(min_value=1, max_value=65535)),
)
@settings(max_examples=200)
def test_normalize_idempotent(scheme, host, path, port):
    netloc = host if port is None else f"{host}:{port}"
    raw = f"{scheme}://{netloc}/{path}"
    first = normalize_url(raw)
    if first is None:
        return
    again = normalize_url(str(first))
    assert again == first


def test_enqueue_dedup_and_depth_bound():
    f = Frontier(max_depth=2)
    a = normalize_url("http://h.example/a")
    assert f.enqueue(a, 0) is True
    assert len(f) == 1
    assert f.enqueue(a, 0) is False  # dedup
    assert len(f) == 1
    deep = normalize_url("http://h.example/deep")
    assert f.enqueue(deep, 3) is False  # beyond max_depth
    assert len(f) == 1


def test_dequeue_fifo_order():
    f = Frontier(max_depth=5)
    a, b, c = (normalize_url(f"http://h.example/{n}") for n in "abc")
    f.enqueue(a, 0)
    f.enqueue(b, 1)
    f.enqueue(c, 1)
    assert [e.url for e in (f.dequeue(), f.dequeue(), f.dequeue())] == [a, b, c]
    assert f.dequeue() is None


def test_every_queued_url_is_seen():
    f = Frontier(max_depth=3)
    for n in range(10):
        f.enqueue(normalize_url(f"http://h.example/{n}"), n % 3)
    for entry in f.snapshot_queue():
        assert f.is_seen(entry.url)


@given(
    ops=st.lists(
        st.tuples(st.integers(min_value=0, max_value=30), st.integers(min_value=0, max_value=3)),
        max_size=60,
    )
)
@settings(max_examples=100)
def test_frontier_matches_reference_fifo(ops):
    """Interleaved enqueues/dequeues track a plain deque+set simulation."""
    f = Frontier(max_depth=3)
    reference = deque()
    seen = set()
    for page, depth in ops:
        url = normalize_url(f"http://h.example/p/{page}")
        got = f.enqueue(url, depth)
        expected = url not in seen and depth <= 3
        assert got == expected
        if expected:
            seen.add(url)
            reference.append((url, depth))
    while True:
        entry = f.dequeue()
        if entry is None:
            break
        url, depth = reference.popleft()
        assert entry.url == url and entry.depth == depth
    assert not reference


@given(st.data())
@settings(max_examples=60)
def test_crawl_style_enqueues_dequeue_depth_monotone(data):
    """Driving the frontier like the engine does yields non-decreasing depths.

    Children are enqueued at parent depth + 1 while the parent is processed,
    so depth-1 entries all dequeue before any depth-2 entry even when several
    parents contribute links in interleaved order.
    """
    node_count = data.draw(st.integers(min_value=2, max_value=20))
    edges = {
        n: data.draw(
            st.lists(st.integers(min_value=0, max_value=node_count - 1), max_size=4)
        )
        for n in range(node_count)
    }
    f = Frontier(max_depth=3)
    root = normalize_url("http://h.example/p/0")
    f.enqueue(root, 0)
    depths = []
    while (entry := f.dequeue()) is not None:
        depths.append(entry.depth)
        page = int(entry.url.path.rsplit("/", 1)[1])
        for child in edges[page]:
            f.enqueue(normalize_url(f"http://h.example/p/{child}"), entry.depth + 1)
    assert depths == sorted(depths)


def test_register_digest_dedups():
    f = Frontier()
    assert f.register_digest("d1") is True
    assert f.register_digest("d1") is False
    assert f.register_digest("d2") is True
