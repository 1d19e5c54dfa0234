import threading
import time
from datetime import date, datetime, timezone

import httpx
import pytest

from threatcast import linker
from threatcast.corpus import Tweet
from threatcast.linker import Link, LinkTable, OfflineCache
from threatcast.nvd import CveRecord, NvdStore

import linkfixture


def tweet(tid, text, urls=(), day=(2016, 5, 1)):
    return Tweet(tid, datetime(*day, 9, tzinfo=timezone.utc), "u", text, tuple(urls))


def test_extract_normalizes_case():
    assert linker.extract_cves("see cve-2016-1234 and CVE-2016-12345") == {"CVE-2016-1234", "CVE-2016-12345"}
    assert linker.extract_cves("CVE-16-1 CVE-2016-12") == set()


def test_stage_one_beats_pages(tmp_path):
    cache = OfflineCache(tmp_path)
    cache.store("http://p", "CVE-2016-0002")
    res = linker.link_tweet(tweet("1", "CVE-2016-0001", ["http://p"]), cache)
    assert res == linker.LinkResult("CVE-2016-0001", "text")


def test_url_string_counts_as_text():
    res = linker.link_tweet(tweet("1", "look", ["https://nvd.nist.gov/vuln/detail/CVE-2016-0009"]), None)
    assert res == linker.LinkResult("CVE-2016-0009", "text")


def test_no_provider_means_no_pages():
    assert linker.link_tweet(tweet("1", "look", ["http://x"]), None) == linker.LinkResult(None, None)


def test_fixture_table(tmp_path):
    cache = linkfixture.write_cache(tmp_path / "cache")
    table = linker.build_link_table(linkfixture.TWEETS, OfflineCache(tmp_path / "cache"))
    assert {(l.cve_id, l.tweet_id, l.stage) for l in table.links()} == linkfixture.EXPECTED_LINKS
    assert len(cache) == 15


def test_fixture_prefetch_gives_same_table(tmp_path):
    linkfixture.write_cache(tmp_path)
    serial = linker.build_link_table(linkfixture.TWEETS, OfflineCache(tmp_path))
    parallel = linker.build_link_table(linkfixture.TWEETS, OfflineCache(tmp_path), workers=4)
    assert serial.links() == parallel.links()


def test_table_rejects_second_cve():
    t = LinkTable()
    when = datetime(2016, 1, 1, tzinfo=timezone.utc)
    t.add(Link("CVE-2016-0001", "x", when, "text"))
    with pytest.raises(ValueError):
        t.add(Link("CVE-2016-0002", "x", when, "text"))


def test_table_csv_roundtrip(tmp_path):
    linkfixture.write_cache(tmp_path / "c")
    table = linker.build_link_table(linkfixture.TWEETS, OfflineCache(tmp_path / "c"))
    table.write_csv(tmp_path / "links.csv")
    again = LinkTable.read_csv(tmp_path / "links.csv")
    assert again.links() == table.links()


@pytest.mark.parametrize("posted,lead", [((2016, 5, 27, 23), 5), ((2016, 5, 28, 0), 4), ((2016, 6, 2, 1), -1)])
def test_lead_days_use_utc_dates(posted, lead):
    assert linker.lead_days(date(2016, 6, 1), datetime(*posted, tzinfo=timezone.utc)) == lead


def _store():
    store = NvdStore()
    for rec in linkfixture.NVD:
        store.add(rec)
    return store


def test_fixture_time_constraints(tmp_path, caplog):
    linkfixture.write_cache(tmp_path)
    table = linker.build_link_table(linkfixture.TWEETS, OfflineCache(tmp_path))
    kept = linker.apply_time_constraints(table, _store(), 5, 365, 3)
    assert {c: set(kept.by_cve[c]) for c in kept.cves()} == linkfixture.EXPECTED_KEPT
    assert "CVE-2016-0008" in caplog.text


def test_text_exemption_only_applies_to_text_links():
    store = NvdStore()
    store.add(CveRecord("CVE-2016-0001", date(2017, 6, 1)))
    old = datetime(2016, 1, 1, tzinfo=timezone.utc)
    table = LinkTable()
    for i, stage in enumerate(["text", "text", "page"]):
        table.add(Link("CVE-2016-0001", f"t{i}", old, stage))
    assert len(linker.apply_time_constraints(table, store, 5, 365, 2).by_tweet) == 2
    assert len(linker.apply_time_constraints(table, store, 5, 365, 3)) == 0


def test_audit_sample_deterministic(tmp_path):
    linkfixture.write_cache(tmp_path)
    table = linker.build_link_table(linkfixture.TWEETS, OfflineCache(tmp_path))
    a = linker.audit_sample(table, 10, seed=3)
    assert a == linker.audit_sample(table, 10, seed=3) and len(a) == 10
    assert linker.audit_sample(table, 1000) == table.links()


def test_cache_manifest_persists(tmp_path):
    cache = OfflineCache(tmp_path)
    cache.store("http://a", "CVE-2016-0001 text", "http://final")
    again = OfflineCache(tmp_path)
    assert again.resolve("http://a") == "CVE-2016-0001 text"
    assert again.final_url("http://a") == "http://final"
    assert again.resolve("http://missing") is None


def _mock_client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler), follow_redirects=True)


def test_live_fetcher_follows_redirects_and_caches(tmp_path):
    calls = []

    def handler(request):
        calls.append(str(request.url))
        if request.url.host == "t.co":
            return httpx.Response(301, headers={"Location": "https://vendor.example/CVE-2016-0042"})
        if request.url.host == "down.example":
            return httpx.Response(503)
        return httpx.Response(200, text="advisory body")

    fetcher = linker.LiveFetcher(OfflineCache(tmp_path), client=_mock_client(handler))
    res = linker.link_tweet(tweet("1", "wow", ["https://t.co/abc"]), fetcher)
    assert res == linker.LinkResult("CVE-2016-0042", "text")
    n = len(calls)
    assert fetcher.resolve("https://t.co/abc") == "advisory body" and len(calls) == n
    assert fetcher.resolve("https://down.example/x") is None
    assert OfflineCache(tmp_path).final_url("https://t.co/abc") == "https://vendor.example/CVE-2016-0042"


def test_live_fetcher_limits_per_host(tmp_path):
    active, peak, lock = [0], [0], threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return httpx.Response(200, text="nothing")

    fetcher = linker.LiveFetcher(OfflineCache(tmp_path), per_host=2, client=_mock_client(handler))
    tweets = [tweet(str(i), "x", [f"https://one.example/{i}"]) for i in range(8)]
    linker.prefetch(tweets, fetcher, workers=6)
    assert peak[0] <= 2
    assert len(OfflineCache(tmp_path)) == 8
