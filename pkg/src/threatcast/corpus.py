"""Tweet ingestion, normalization, near-duplicate removal and splitting."""

from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

TARGET = "<TARGET>"

_URL_RE = re.compile(r"^(?:https?://|www\.)", re.IGNORECASE)
_URL_TRAILING = ".,;:!?)]}'\"…"


@dataclass(frozen=True)
class Entity:
    start: int  # byte offsets into the UTF-8 encoded text
    end: int
    surface: str


@dataclass(frozen=True)
class Tweet:
    id: str
    posted_at: datetime
    author: str
    text: str
    urls: tuple[str, ...] = ()
    entities: tuple[Entity, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValidationError("tweet id must be non-empty")
        if self.posted_at.tzinfo is None:
            raise ValidationError(f"tweet {self.id}: posted_at must be timezone-aware")
        nbytes = len(self.text.encode("utf-8"))
        prev_end = -1
        for ent in sorted(self.entities, key=lambda e: e.start):
            if not 0 <= ent.start <= ent.end <= nbytes:
                raise ValidationError(f"tweet {self.id}: entity span {ent.start}:{ent.end} out of bounds")
            if ent.start < prev_end:
                raise ValidationError(f"tweet {self.id}: overlapping entity spans")
            prev_end = ent.end

    @property
    def date(self) -> date:
        return self.posted_at.astimezone(timezone.utc).date()


@dataclass(frozen=True)
class Instance:
    tweet_id: str
    target_entity: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class SplitSpec:
    """Either absolute ``counts`` or ``fractions`` for (train, dev, test)."""

    seed: int = 0
    counts: tuple[int, int, int] | None = None
    fractions: tuple[float, float, float] | None = field(default=None)

    def resolve(self, n: int) -> tuple[int, int, int]:
        if self.counts is not None:
            counts = tuple(int(c) for c in self.counts)
            if any(c < 0 for c in counts):
                raise ConfigError(f"negative split count in {counts}")
            if sum(counts) > n:
                raise ConfigError(f"split counts {counts} exceed corpus size {n}")
            if sum(counts) != n:
                raise ConfigError(f"split counts {counts} do not cover corpus size {n}")
            return counts  # type: ignore[return-value]
        fractions = self.fractions or (4 / 6, 1 / 6, 1 / 6)
        if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-6:
            raise ConfigError(f"split fractions {fractions} must be non-negative and sum to 1")
        n_train = int(n * fractions[0])
        n_dev = int(n * fractions[1])
        return n_train, n_dev, n - n_train - n_dev


# -- timestamps ---------------------------------------------------------------

def parse_timestamp(value: str) -> datetime:
    """Parse RFC 3339 (or the legacy Twitter API format) into an aware UTC datetime."""
    text = value.strip()
    try:
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    except ValueError:
        try:
            ts = datetime.strptime(text, "%a %b %d %H:%M:%S %z %Y")
        except ValueError:
            raise ValidationError(f"unparseable timestamp {value!r}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# -- tokenization -------------------------------------------------------------

def _is_word_char(c: str) -> bool:
    return c.isalnum() or c == "_"


def _split_chunk(chunk: str) -> list[str]:
    lead: list[str] = []
    start, end = 0, len(chunk)
    while start < end and not _is_word_char(chunk[start]):
        c = chunk[start]
        if c in "#@" and start + 1 < end and _is_word_char(chunk[start + 1]):
            break
        if _URL_RE.match(chunk, start):
            break
        lead.append(c)
        start += 1
    if start == end:
        return lead
    is_url = _URL_RE.match(chunk, start) is not None
    trail: list[str] = []
    while end > start + 1:
        c = chunk[end - 1]
        if is_url and c not in _URL_TRAILING:
            break
        if not is_url and _is_word_char(c):
            break
        trail.append(c)
        end -= 1
    return lead + [chunk[start:end]] + trail[::-1]


def _map_digits(token: str) -> str:
    return "".join("0" if c.isdigit() else c for c in token)


def tokenize(text: str) -> list[str]:
    """Lowercase, whitespace split, peel leading/trailing punctuation, digits to 0.

    Hashtags, @-mentions and URLs survive as single tokens.
    """
    tokens: list[str] = []
    for chunk in text.split():
        tokens.extend(_map_digits(tok.lower()) for tok in _split_chunk(chunk))
    return tokens


def normalize(tweet: Tweet, entity_index: int | None) -> Instance:
    """Tokenize ``tweet`` collapsing the selected entity span into ``TARGET``.

    ``entity_index=None`` tokenizes the whole text without collapsing anything.
    """
    if entity_index is None:
        return Instance(tweet.id, "", tuple(tokenize(tweet.text)))
    if not 0 <= entity_index < len(tweet.entities):
        raise IndexError(f"tweet {tweet.id} has no entity {entity_index}")
    ent = tweet.entities[entity_index]
    raw = tweet.text.encode("utf-8")
    try:
        before = raw[: ent.start].decode("utf-8")
        after = raw[ent.end :].decode("utf-8")
    except UnicodeDecodeError:
        raise ValidationError(f"tweet {tweet.id}: entity span splits a character") from None
    tokens = tokenize(before) + [TARGET] + tokenize(after)
    return Instance(tweet.id, ent.surface, tuple(tokens))


def instances(tweet: Tweet) -> list[Instance]:
    """One instance per entity, or a single whole-text instance when there are none."""
    if not tweet.entities:
        return [normalize(tweet, None)]
    return [normalize(tweet, i) for i in range(len(tweet.entities))]


# -- deduplication ------------------------------------------------------------

def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _scan_order(tweets: Sequence[Tweet]) -> list[int]:
    return sorted(range(len(tweets)), key=lambda i: (tweets[i].posted_at, i))


def dedup_by_jaccard(tweets: Sequence[Tweet], threshold: float = 0.7) -> list[Tweet]:
    """Drop tweets whose unigram Jaccard with an earlier kept same-day tweet is >= threshold."""
    if not 0 < threshold <= 1:
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")
    kept_by_day: dict[date, list[set[str]]] = defaultdict(list)
    keep = [False] * len(tweets)
    for i in _scan_order(tweets):
        unigrams = set(tokenize(tweets[i].text))
        bucket = kept_by_day[tweets[i].date]
        if any(jaccard(unigrams, other) >= threshold for other in bucket):
            continue
        bucket.append(unigrams)
        keep[i] = True
    return [t for t, k in zip(tweets, keep) if k]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lcs_tokens(text: str) -> list[str]:
    """Tokens compared by the LCS pass: hashtags and URLs removed, digits already 0."""
    return [t for t in tokenize(text) if not t.startswith("#") and not _URL_RE.match(t)]


def lcs_ratio(a: Sequence[str], b: Sequence[str]) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return lcs_length(a, b) / longest


def dedup_by_lcs(tweets: Sequence[Tweet], ratio: float = 0.5) -> list[Tweet]:
    """Drop a tweet when its LCS with an earlier kept tweet covers more than ``ratio`` of the longer one."""
    if not 0 < ratio <= 1:
        raise ValidationError(f"ratio must be in (0, 1], got {ratio}")
    kept: list[list[str]] = []
    keep = [False] * len(tweets)
    for i in _scan_order(tweets):
        toks = lcs_tokens(tweets[i].text)
        if any(lcs_ratio(toks, other) > ratio for other in kept):
            continue
        kept.append(toks)
        keep[i] = True
    return [t for t, k in zip(tweets, keep) if k]


# -- splitting ----------------------------------------------------------------

def split(corpus: Sequence, spec: SplitSpec) -> tuple[list, list, list]:
    n_train, n_dev, n_test = spec.resolve(len(corpus))
    order = np.random.default_rng(spec.seed).permutation(len(corpus))
    parts = np.split(order, [n_train, n_train + n_dev])
    return tuple([corpus[i] for i in part] for part in parts)  # type: ignore[return-value]


# -- file formats -------------------------------------------------------------

def tweet_from_json(obj: dict) -> Tweet:
    try:
        entities = tuple(
            Entity(int(e["start"]), int(e["end"]), str(e.get("surface", "")))
            for e in obj.get("entities") or ()
        )
        return Tweet(
            id=str(obj["id"]),
            posted_at=parse_timestamp(obj["created_at"]),
            author=str(obj.get("user", "")),
            text=str(obj.get("text", "")),
            urls=tuple(str(u) for u in obj.get("urls") or ()),
            entities=entities,
        )
    except KeyError as exc:
        raise ValidationError(f"missing field {exc.args[0]!r}") from None


def tweet_to_json(tweet: Tweet, with_tokens: bool = False) -> dict:
    obj = {
        "id": tweet.id,
        "created_at": format_timestamp(tweet.posted_at),
        "user": tweet.author,
        "text": tweet.text,
        "urls": list(tweet.urls),
        "entities": [{"start": e.start, "end": e.end, "surface": e.surface} for e in tweet.entities],
    }
    if with_tokens:
        obj["tokens"] = list(normalize(tweet, 0 if tweet.entities else None).tokens)
    return obj


def read_tweets(path) -> list[Tweet]:
    tweets: list[Tweet] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                tweet = tweet_from_json(json.loads(line))
            except (json.JSONDecodeError, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if tweet.id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate tweet id {tweet.id}")
            seen.add(tweet.id)
            tweets.append(tweet)
    return tweets


def write_tweets(path, tweets: Iterable[Tweet], with_tokens: bool = True) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tweet in tweets:
            fh.write(json.dumps(tweet_to_json(tweet, with_tokens), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
