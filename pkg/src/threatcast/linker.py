"""Link tweets to CVE records through CVE ids in text, URLs, or linked page content."""

from __future__ import annotations

import csv
import hashlib
import logging
import os
import re
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence
from urllib.parse import urlparse

import numpy as np

from .corpus import Tweet, format_timestamp, parse_timestamp
from .nvd import CveRecord

logger = logging.getLogger(__name__)

CVE_RE = re.compile(r"CVE-[0-9]{4}-[0-9]{4,}", re.IGNORECASE)

STAGE_TEXT = "text"  # CVE id in tweet text or URL strings
STAGE_PAGE = "page"  # CVE id found in the content of a linked page


def extract_cves(text: str) -> set[str]:
    return {m.upper() for m in CVE_RE.findall(text or "")}


class PageProvider(Protocol):
    def resolve(self, url: str) -> str | None:
        """Page text for ``url``, or None when unavailable."""

    def final_url(self, url: str) -> str | None:
        """URL after redirects, when known."""


class OfflineCache:
    """Pages stored on disk, indexed by ``manifest.tsv``.

    Manifest lines: ``url<TAB>content-path[<TAB>final-url]``; paths are relative to the
    cache directory and contents are UTF-8 text.
    """

    MANIFEST = "manifest.tsv"

    def __init__(self, directory):
        self.directory = Path(directory)
        self._entries: dict[str, tuple[str, str | None]] = {}
        self._lock = threading.Lock()
        manifest = self.directory / self.MANIFEST
        if manifest.exists():
            with open(manifest, encoding="utf-8") as fh:
                for line in fh:
                    parts = line.rstrip("\n").split("\t")
                    if len(parts) >= 2 and parts[0]:
                        self._entries[parts[0]] = (parts[1], parts[2] if len(parts) > 2 and parts[2] else None)

    def __contains__(self, url: str) -> bool:
        return url in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def resolve(self, url: str) -> str | None:
        entry = self._entries.get(url)
        if entry is None:
            return None
        try:
            return (self.directory / entry[0]).read_text(encoding="utf-8")
        except OSError as exc:
            logger.warning("cache entry for %s unreadable: %s", url, exc)
            return None

    def final_url(self, url: str) -> str | None:
        entry = self._entries.get(url)
        return entry[1] if entry else None

    def store(self, url: str, text: str, final_url: str | None = None) -> None:
        name = "pages/" + hashlib.sha256(url.encode("utf-8")).hexdigest() + ".txt"
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            path.write_text(text, encoding="utf-8")
            self._entries[url] = (name, final_url)
            self._write_manifest()

    def _write_manifest(self) -> None:
        tmp = self.directory / (self.MANIFEST + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for url in sorted(self._entries):
                name, final = self._entries[url]
                fh.write(f"{url}\t{name}\t{final or ''}\n")
        os.replace(tmp, self.directory / self.MANIFEST)


class LiveFetcher:
    """Fetches pages over HTTP, following redirects, and writes every body into an OfflineCache.

    At most ``per_host`` requests run concurrently against one host.
    """

    def __init__(self, cache: OfflineCache, timeout: float = 10.0, per_host: int = 2, client=None):
        import httpx

        self.cache = cache
        self.client = client or httpx.Client(follow_redirects=True, timeout=timeout)
        self.per_host = per_host
        self._host_slots: dict[str, threading.Semaphore] = defaultdict(lambda: threading.Semaphore(per_host))
        self._slots_lock = threading.Lock()
        self._url_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    def _slot(self, url: str) -> threading.Semaphore:
        with self._slots_lock:
            return self._host_slots[urlparse(url).netloc.lower()]

    def resolve(self, url: str) -> str | None:
        with self._slots_lock:
            url_lock = self._url_locks[url]
        with url_lock:
            if url in self.cache:
                return self.cache.resolve(url)
            try:
                with self._slot(url):
                    resp = self.client.get(url)
                resp.raise_for_status()
            except Exception as exc:  # network errors count as an empty page
                logger.warning("fetch failed for %s: %s", url, exc)
                return None
            self.cache.store(url, resp.text, str(resp.url))
            return resp.text

    def final_url(self, url: str) -> str | None:
        if url not in self.cache:
            self.resolve(url)
        return self.cache.final_url(url)


@dataclass(frozen=True)
class Link:
    cve_id: str
    tweet_id: str
    posted_at: datetime
    stage: str


@dataclass
class LinkTable:
    """cve_id -> {tweet_id: Link}, with each tweet under at most one CVE."""

    by_cve: dict[str, dict[str, Link]] = field(default_factory=dict)
    by_tweet: dict[str, str] = field(default_factory=dict)

    def add(self, link: Link) -> None:
        owner = self.by_tweet.get(link.tweet_id)
        if owner is not None and owner != link.cve_id:
            raise ValueError(f"tweet {link.tweet_id} already linked to {owner}")
        self.by_cve.setdefault(link.cve_id, {})[link.tweet_id] = link
        self.by_tweet[link.tweet_id] = link.cve_id

    def cves(self) -> list[str]:
        return sorted(self.by_cve)

    def links(self, cve_id: str | None = None) -> list[Link]:
        cves = [cve_id] if cve_id is not None else self.cves()
        out = []
        for c in cves:
            out.extend(sorted(self.by_cve.get(c, {}).values(), key=lambda l: (l.posted_at, l.tweet_id)))
        return out

    def __len__(self) -> int:
        return len(self.by_cve)

    def first_seen(self, cve_id: str) -> datetime:
        return min(l.posted_at for l in self.by_cve[cve_id].values())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["cve_id", "tweet_id", "posted_at", "stage"])
            for link in self.links():
                writer.writerow([link.cve_id, link.tweet_id, format_timestamp(link.posted_at), link.stage])

    @classmethod
    def read_csv(cls, path) -> "LinkTable":
        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                table.add(Link(row["cve_id"], row["tweet_id"], parse_timestamp(row["posted_at"]), row["stage"]))
        return table


@dataclass(frozen=True)
class LinkResult:
    cve_id: str | None
    stage: str | None


def link_tweet(tweet: Tweet, provider: PageProvider | None) -> LinkResult:
    """Stage 1 reads the tweet text and URL strings (raw and resolved); stage 2, only when
    stage 1 finds nothing, reads linked pages and ignores pages naming several CVEs.
    A tweet links only when exactly one CVE is found.
    """
    found = extract_cves(tweet.text)
    for url in tweet.urls:
        found |= extract_cves(url)
        final = provider.final_url(url) if provider is not None else None
        if final:
            found |= extract_cves(final)
    if found:
        return LinkResult(found.pop(), STAGE_TEXT) if len(found) == 1 else LinkResult(None, None)
    if provider is None:
        return LinkResult(None, None)
    for url in tweet.urls:
        page = provider.resolve(url)
        if page is None:
            logger.info("no page for %s (tweet %s)", url, tweet.id)
            continue
        on_page = extract_cves(page)
        if len(on_page) > 1:
            continue
        found |= on_page
    if len(found) == 1:
        return LinkResult(found.pop(), STAGE_PAGE)
    return LinkResult(None, None)


def prefetch(tweets: Iterable[Tweet], provider: PageProvider, workers: int = 4) -> None:
    """Resolve every URL concurrently so the following sequential fold hits the cache."""
    urls = sorted({u for t in tweets for u in t.urls})
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(provider.resolve, urls))


def build_link_table(tweets: Sequence[Tweet], provider: PageProvider | None, workers: int = 1) -> LinkTable:
    if provider is not None and workers > 1:
        prefetch(tweets, provider, workers)
    table = LinkTable()
    for tweet in tweets:
        res = link_tweet(tweet, provider)
        if res.cve_id is not None:
            table.add(Link(res.cve_id, tweet.id, tweet.posted_at, res.stage))
    return table


def lead_days(published: date, posted_at: datetime) -> int:
    """Whole UTC days from the tweet's date to the publication date."""
    return (published - posted_at.astimezone(timezone.utc).date()).days


def apply_time_constraints(table: LinkTable, nvd_store: Mapping[str, CveRecord], min_lead_days: int = 5,
                           max_lead_days: int = 365, min_tweets: int = 3) -> LinkTable:
    """Keep tweets posted between ``min_lead_days`` and ``max_lead_days`` before publication
    (explicit text/URL mentions are exempt from the maximum), then keep CVEs with at least
    ``min_tweets`` such tweets.
    """
    out = LinkTable()
    for cve in table.cves():
        record = nvd_store.get(cve)
        if record is None:
            logger.warning("%s linked but absent from the NVD store; excluded", cve)
            continue
        kept = []
        for link in table.links(cve):
            lead = lead_days(record.published_at, link.posted_at)
            if lead < min_lead_days:
                continue
            if lead > max_lead_days and link.stage != STAGE_TEXT:
                continue
            kept.append(link)
        if len(kept) >= min_tweets:
            for link in kept:
                out.add(link)
    return out


def audit_sample(table: LinkTable, n: int, seed: int = 0) -> list[Link]:
    links = table.links()
    if n >= len(links):
        return links
    picks = np.random.default_rng(seed).choice(len(links), size=n, replace=False)
    return [links[i] for i in sorted(picks)]
