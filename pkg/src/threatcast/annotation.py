"""Crowd vote aggregation, worker quality control and Cohen's kappa."""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Sequence

from .errors import EmptyEvidenceError, ValidationError


class Phase(str, Enum):
    EXISTENCE = "existence"
    SEVERITY = "severity"


LABELS = {
    Phase.EXISTENCE: ("ThreatTowardEntity", "ThreatOtherEntity", "NoThreat"),
    Phase.SEVERITY: ("Severe", "Moderate", "NoThreat"),
}
POSITIVE = {Phase.EXISTENCE: "ThreatTowardEntity", Phase.SEVERITY: "Severe"}
# label is positive iff positive votes exceed the cutoff
CUTOFF = {Phase.EXISTENCE: 3, Phase.SEVERITY: 6}
EXPECTED_VOTES = {Phase.EXISTENCE: 5, Phase.SEVERITY: 10}


@dataclass(frozen=True)
class Vote:
    worker_id: str
    tweet_id: str
    phase: Phase
    label: str

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        if self.label not in LABELS[self.phase]:
            raise ValidationError(f"label {self.label!r} is not legal for phase {self.phase.value}")


@dataclass(frozen=True)
class AggregatedLabel:
    tweet_id: str
    phase: Phase
    positive_votes: int
    total_votes: int
    label: bool


def _check_unique(votes: Iterable[Vote]) -> None:
    seen = set()
    for v in votes:
        key = (v.worker_id, v.tweet_id, v.phase)
        if key in seen:
            raise ValidationError(f"duplicate vote by {v.worker_id} on {v.tweet_id} ({v.phase.value})")
        seen.add(key)


def aggregate(votes: Sequence[Vote], phase: Phase | str, strict: bool = True) -> list[AggregatedLabel]:
    """Resolve per-tweet votes of one phase into boolean labels, sorted by tweet id."""
    phase = Phase(phase)
    votes = [v for v in votes if v.phase is phase]
    _check_unique(votes)
    by_tweet: dict[str, list[Vote]] = defaultdict(list)
    for v in votes:
        by_tweet[v.tweet_id].append(v)
    out = []
    for tweet_id in sorted(by_tweet):
        tv = by_tweet[tweet_id]
        if strict and len(tv) != EXPECTED_VOTES[phase]:
            raise ValidationError(
                f"tweet {tweet_id}: expected {EXPECTED_VOTES[phase]} {phase.value} votes, got {len(tv)}"
            )
        positive = sum(v.label == POSITIVE[phase] for v in tv)
        out.append(AggregatedLabel(tweet_id, phase, positive, len(tv), positive > CUTOFF[phase]))
    return out


def _plurality(labels: Iterable[str]) -> str | None:
    counts = Counter(labels).most_common()
    if not counts or (len(counts) > 1 and counts[0][1] == counts[1][1]):
        return None
    return counts[0][0]


def _agreement_counts(votes: Sequence[Vote]) -> dict[str, tuple[int, int]]:
    """Per worker: (matches, evaluable) against the leave-one-out plurality."""
    groups: dict[tuple[str, Phase], list[Vote]] = defaultdict(list)
    for v in votes:
        groups[(v.tweet_id, v.phase)].append(v)
    stats: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for group in groups.values():
        for v in group:
            majority = _plurality(o.label for o in group if o.worker_id != v.worker_id)
            if majority is None:
                continue
            stats[v.worker_id][1] += 1
            stats[v.worker_id][0] += v.label == majority
    return {w: (m, n) for w, (m, n) in stats.items()}


def worker_agreement(votes: Sequence[Vote], worker_id: str) -> float:
    """Fraction of a worker's votes matching the plurality of the other workers on the same tweet.

    Tweets where the other workers tie (or where nobody else voted) are skipped.
    """
    _check_unique(votes)
    matches, evaluable = _agreement_counts(votes).get(worker_id, (0, 0))
    if evaluable == 0:
        raise EmptyEvidenceError(f"worker {worker_id} has no votes with a defined majority")
    return matches / evaluable


def filter_workers(votes: Sequence[Vote], min_agreement: float = 0.5) -> list[Vote]:
    """Single pass: drop every vote of workers whose agreement is below ``min_agreement``.

    Workers without evaluable votes are kept.
    """
    if not 0 <= min_agreement <= 1:
        raise ValidationError(f"min_agreement must be in [0, 1], got {min_agreement}")
    _check_unique(votes)
    rates = {w: m / n for w, (m, n) in _agreement_counts(votes).items() if n}
    dropped = {w for w, r in rates.items() if r < min_agreement}
    return [v for v in votes if v.worker_id not in dropped]


def cohens_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    if len(labels_a) != len(labels_b):
        raise ValidationError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise ValidationError("kappa needs at least one pair of labels")
    agree = sum(a == b for a, b in zip(labels_a, labels_b))
    ca, cb = Counter(labels_a), Counter(labels_b)
    chance = sum(ca[k] * cb[k] for k in ca)
    # integer form of (p_o - p_e) / (1 - p_e)
    if chance == n * n:
        return 1.0 if agree == n else 0.0
    return (n * agree - chance) / (n * n - chance)


# -- file formats -------------------------------------------------------------

def read_votes(path) -> list[Vote]:
    votes = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"worker_id", "tweet_id", "phase", "label"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                votes.append(Vote(row["worker_id"], row["tweet_id"], row["phase"], row["label"]))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return votes


def write_votes(path, votes: Iterable[Vote]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["worker_id", "tweet_id", "phase", "label"])
        for v in votes:
            writer.writerow([v.worker_id, v.tweet_id, v.phase.value, v.label])


def write_labels(path, labels: Iterable[AggregatedLabel]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lab in labels:
            fh.write(json.dumps({
                "tweet_id": lab.tweet_id,
                "phase": lab.phase.value,
                "positive_votes": lab.positive_votes,
                "total_votes": lab.total_votes,
                "label": lab.label,
            }, sort_keys=True) + "\n")


def read_labels(path) -> list[AggregatedLabel]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                out.append(AggregatedLabel(o["tweet_id"], Phase(o["phase"]), int(o["positive_votes"]),
                                           int(o["total_votes"]), bool(o["label"])))
    return out
