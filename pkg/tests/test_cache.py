from __future__ import annotations

import threading

from mlbcap.cache import CompletionCache, completion_key

from conftest import PNG_BYTES


def test_key_depends_on_every_component(tmp_path):
    image = tmp_path / "a.png"
    image.write_bytes(PNG_BYTES)
    base = completion_key("judge", "b1", "m1", "prompt", str(image))
    assert completion_key("assess", "b1", "m1", "prompt", str(image)) != base
    assert completion_key("judge", "b2", "m1", "prompt", str(image)) != base
    assert completion_key("judge", "b1", "m2", "prompt", str(image)) != base
    assert completion_key("judge", "b1", "m1", "other", str(image)) != base
    assert completion_key("judge", "b1", "m1", "prompt", None) != base
    assert completion_key("judge", "b1", "m1", "prompt", str(image)) == base


def test_key_tracks_image_content(tmp_path):
    image = tmp_path / "a.png"
    image.write_bytes(PNG_BYTES)
    before = completion_key("s", "b", "m", "p", str(image))
    image.write_bytes(PNG_BYTES + b"\x01")
    assert completion_key("s", "b", "m", "p", str(image)) != before


def test_missing_image_falls_back_to_ref_string(tmp_path):
    ref = str(tmp_path / "not-there.png")
    assert completion_key("s", "b", "m", "p", ref) == completion_key("s", "b", "m", "p", ref)


def test_get_put_round_trip(tmp_path):
    cache = CompletionCache(tmp_path / "cache")
    key = completion_key("s", "b", "m", "p")
    assert cache.get(key) is None
    cache.put(key, "reply text")
    assert cache.get(key) == "reply text"


def test_concurrent_writers_leave_complete_entry(tmp_path):
    cache = CompletionCache(tmp_path / "cache")
    key = completion_key("s", "b", "m", "p")

    def writer(value):
        for _ in range(50):
            cache.put(key, value)

    threads = [threading.Thread(target=writer, args=(f"value-{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    value = cache.get(key)
    assert value in {f"value-{i}" for i in range(4)}
    assert not list(cache.root.glob("**/*.tmp.*"))
