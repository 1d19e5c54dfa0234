"""Rank linked CVEs by predicted severity and score the rankings against NVD and exploit lists."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import metrics
from .corpus import Tweet, instances
from .errors import ValidationError
from .linker import LinkTable
from .nvd import CveRecord, best_score, is_severe

logger = logging.getLogger(__name__)

SCORERS = ("model", "volume", "true-cvss", "random")
DEFAULT_KS = (10, 50, 100)


class Classifier(Protocol):
    def probability(self, tokens: Sequence[str]) -> float: ...


def tweet_severity(tweet: Tweet, classifier: Classifier) -> float:
    """Highest severity over the tweet's (entity, tweet) tuples; whole text when it has no entity."""
    return max(classifier.probability(inst.tokens) for inst in instances(tweet))


def forecast_score(cve_id: str, table: LinkTable, tweet_scores: Mapping[str, float] | Callable[[str], float]) -> float:
    links = table.by_cve.get(cve_id)
    if not links:
        raise ValidationError(f"{cve_id} has no linked tweets")
    score = tweet_scores.__getitem__ if isinstance(tweet_scores, Mapping) else tweet_scores
    return max(score(tid) for tid in links)


def volume_score(cve_id: str, table: LinkTable) -> int:
    links = table.by_cve.get(cve_id)
    if not links:
        raise ValidationError(f"{cve_id} has no linked tweets")
    return len(links)


def model_scores(table: LinkTable, tweet_scores) -> dict[str, float]:
    return {cve: forecast_score(cve, table, tweet_scores) for cve in table.cves()}


def volume_scores(table: LinkTable) -> dict[str, float]:
    return {cve: float(volume_score(cve, table)) for cve in table.cves()}


def cvss_scores(table: LinkTable, nvd_store: Mapping[str, CveRecord]) -> dict[str, float]:
    """Reference-only ranker on the published score (v3, else v2)."""
    out = {}
    for cve in table.cves():
        score = best_score(nvd_store[cve]) if cve in nvd_store else None
        if score is None:
            raise ValidationError(f"{cve} has no CVSS score")
        out[cve] = score
    return out


def random_scores(table: LinkTable, seed: int = 0) -> dict[str, float]:
    cves = table.cves()
    return dict(zip(cves, np.random.default_rng(seed).random(len(cves)).tolist()))


@dataclass(frozen=True)
class RankedCve:
    cve_id: str
    score: float
    first_seen: datetime
    n_tweets: int


@dataclass
class Ranking:
    entries: list[RankedCve]
    scorer: str = "model"

    def ids(self) -> list[str]:
        return [e.cve_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def write_csv(self, path, nvd_store: Mapping[str, CveRecord] | None = None,
                  exploits: Iterable[str] = ()) -> None:
        exploits = set(exploits)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rank", "cve_id", "score", "cvss_v3", "severe", "exploited",
                             "first_tweet_date", "n_tweets"])
            for r, e in enumerate(self.entries, 1):
                rec = nvd_store.get(e.cve_id) if nvd_store is not None else None
                v3 = "" if rec is None or rec.cvss_v3 is None else repr(rec.cvss_v3)
                severe = "" if rec is None or best_score(rec) is None else int(is_severe(rec))
                score = str(int(e.score)) if self.scorer == "volume" else repr(float(e.score))
                writer.writerow([r, e.cve_id, score, v3, severe, int(e.cve_id in exploits),
                                 e.first_seen.astimezone(timezone.utc).date().isoformat(), e.n_tweets])


def rank(table: LinkTable, scores: Mapping[str, float], scorer: str = "model") -> Ranking:
    """Descending score; ties go to the earliest first tweet, then the smaller CVE id."""
    entries = []
    for cve in table.cves():
        if cve not in scores:
            raise ValidationError(f"no score for {cve}")
        entries.append(RankedCve(cve, float(scores[cve]), table.first_seen(cve), len(table.by_cve[cve])))
    entries.sort(key=lambda e: (-e.score, e.first_seen, e.cve_id))
    return Ranking(entries, scorer)


def _cvss_flags(ranking: Ranking, nvd_store: Mapping[str, CveRecord]) -> list[bool]:
    missing = [c for c in ranking.ids() if c not in nvd_store]
    if missing:
        raise ValidationError(f"ranked CVEs absent from the NVD store: {missing[:5]}")
    return [is_severe(nvd_store[c]) for c in ranking.ids()]


def evaluate_vs_cvss(ranking: Ranking, nvd_store: Mapping[str, CveRecord],
                     ks: Sequence[int] = DEFAULT_KS) -> dict[str, float]:
    """Precision@k and PR-AUC with CVSS >= 7.0 as the positive class."""
    flags = _cvss_flags(ranking, nvd_store)
    out: dict[str, float] = {}
    for k in ks:
        if k <= len(flags):
            out[f"p@{k}"] = metrics.precision_of_ranked(flags, k)
    if any(flags):
        items = [metrics.ScoredLabel(e.score, f, e.cve_id) for e, f in zip(ranking.entries, flags)]
        out["pr_auc"] = metrics.pr_auc(metrics.pr_curve(items))
    return out


def evaluate_random(table: LinkTable, nvd_store: Mapping[str, CveRecord], ks: Sequence[int] = DEFAULT_KS,
                    trials: int = 10, seed: int = 0) -> dict[str, float]:
    """Random-ranking baseline averaged over ``trials`` seeded shuffles."""
    base = rank(table, {c: 0.0 for c in table.cves()}, "random")
    flags = _cvss_flags(base, nvd_store)
    items = [metrics.ScoredLabel(0.0, f, c) for c, f in zip(base.ids(), flags)]
    out: dict[str, float] = {}
    for k in ks:
        if k <= len(items):
            out[f"p@{k}"] = metrics.random_baseline(items, k, trials, seed)
    if any(flags):
        rng = np.random.default_rng(seed)
        aucs = [metrics.average_precision(rng.random(len(flags)), flags) for _ in range(trials)]
        out["pr_auc"] = float(np.mean(aucs))
    return out


def evaluate_vs_exploits(ranking: Ranking, exploit_set: Iterable[str],
                         ks: Sequence[int] = DEFAULT_KS) -> dict[str, float]:
    exploit_set = set(exploit_set)
    flags = [c in exploit_set for c in ranking.ids()]
    if not any(flags):
        raise ValidationError("recall undefined: no ranked CVE is in the exploit set")
    out: dict[str, float] = {}
    for k in ks:
        if k <= len(flags):
            out[f"p@{k}"] = metrics.precision_of_ranked(flags, k)
            out[f"r@{k}"] = metrics.recall_of_ranked(flags, k)
    return out


@dataclass(frozen=True)
class AccountStat:
    account: str
    correct: int
    forecasts: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.forecasts


def account_reliability(table: LinkTable, tweet_scores: Mapping[str, float], authors: Mapping[str, str],
                        nvd_store: Mapping[str, CveRecord], min_tweets: int = 6, score_floor: float = 0.5,
                        exploits: Iterable[str] | None = None) -> list[AccountStat]:
    """Accounts with at least ``min_tweets`` linked tweets scoring above ``score_floor``.

    Each qualifying (tweet, CVE) pair is one forecast; it is correct when the CVE is
    severe in NVD (or, when ``exploits`` is given, known exploited).
    """
    exploit_set = set(exploits) if exploits is not None else None
    qualifying: dict[str, list[str]] = {}
    for tid, cve in sorted(table.by_tweet.items()):
        if tweet_scores.get(tid, 0.0) > score_floor and tid in authors:
            qualifying.setdefault(authors[tid], []).append(cve)
    out = []
    for account, cves in qualifying.items():
        if len(cves) < min_tweets:
            continue
        known = [c for c in cves if c in nvd_store]
        if not known:
            continue
        if exploit_set is not None:
            correct = sum(c in exploit_set for c in known)
        else:
            correct = sum(is_severe(nvd_store[c]) for c in known)
        out.append(AccountStat(account, correct, len(known)))
    out.sort(key=lambda a: (-a.accuracy, -a.forecasts, a.account))
    return out


def write_accounts_csv(path, stats: Sequence[AccountStat]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["account", "correct", "forecasts", "accuracy"])
        for s in stats:
            writer.writerow([s.account, s.correct, s.forecasts, repr(s.accuracy)])
