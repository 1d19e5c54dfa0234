"""Log-odds ranking of severity adjectives and disclosure-delay statistics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .linker import LinkTable, lead_days
from .nvd import CveRecord

HALDANE = 0.5


def load_lexicon(path) -> frozenset[str]:
    """One token per line, or MPQA subjectivity-clue lines (``word1=... pos1=adj``)."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "word1=" in line:
                fields = dict(kv.split("=", 1) for kv in line.split() if "=" in kv)
                if fields.get("pos1", "adj") in ("adj", "anypos"):
                    words.add(fields["word1"].lower())
            else:
                words.add(line.lower())
    return frozenset(words)


def _doc_sets(docs: Iterable[Iterable[str]]) -> list[set[str]]:
    return [set(d) for d in docs]


def log_odds(token: str, severe_docs: Sequence[Iterable[str]], other_docs: Sequence[Iterable[str]],
             smoothing: float = HALDANE) -> float:
    """Smoothed log odds ratio of document frequency in the severe versus the other class."""
    if not severe_docs or not other_docs:
        raise ValidationError("both document sets must be non-empty")
    severe, other = _doc_sets(severe_docs), _doc_sets(other_docs)
    a = sum(token in d for d in severe)
    b = sum(token in d for d in other)
    return _ratio(a, len(severe), b, len(other), smoothing)


def _ratio(a: int, A: int, b: int, B: int, s: float) -> float:
    return math.log(((a + s) / (A - a + s)) / ((b + s) / (B - b + s)))


def rank_adjectives(docs_severe: Sequence[Iterable[str]], docs_other: Sequence[Iterable[str]],
                    lexicon: Iterable[str], k: int | None = None,
                    smoothing: float = HALDANE) -> list[tuple[str, float]]:
    """Lexicon tokens ranked by log odds (descending, ties lexicographic); unseen tokens dropped."""
    if not docs_severe or not docs_other:
        raise ValidationError("both document sets must be non-empty")
    severe, other = _doc_sets(docs_severe), _doc_sets(docs_other)
    lexicon = set(lexicon)
    df_s: dict[str, int] = {}
    df_o: dict[str, int] = {}
    for docs, df in ((severe, df_s), (other, df_o)):
        for d in docs:
            for t in d & lexicon:
                df[t] = df.get(t, 0) + 1
    scored = [(t, _ratio(df_s.get(t, 0), len(severe), df_o.get(t, 0), len(other), smoothing))
              for t in set(df_s) | set(df_o)]
    scored.sort(key=lambda ts: (-ts[1], ts[0]))
    return scored if k is None else scored[:k]


@dataclass(frozen=True)
class DelayStats:
    leads: dict[str, int]
    median: int
    within_60: float

    def to_json(self) -> dict:
        return {"n_cves": len(self.leads), "median_lead_days": self.median,
                "fraction_within_60_days": self.within_60,
                "leads": {c: self.leads[c] for c in sorted(self.leads)}}

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def delay_stats(table: LinkTable, nvd_store: Mapping[str, CveRecord], min_lead: int = 1) -> DelayStats:
    """Publication date minus earliest linked tweet date, for CVEs first seen >= ``min_lead`` days early."""
    leads = {}
    for cve in table.cves():
        rec = nvd_store.get(cve)
        if rec is None:
            continue
        lead = lead_days(rec.published_at, table.first_seen(cve))
        if lead >= min_lead:
            leads[cve] = lead
    if not leads:
        raise ValidationError("no CVE has a qualifying lead time")
    ordered = sorted(leads.values())
    median = ordered[(len(ordered) - 1) // 2]
    return DelayStats(leads, median, sum(v <= 60 for v in ordered) / len(ordered))


def write_ratios_csv(path, ranked: Sequence[tuple[str, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["token", "log_odds"])
        for tok, r in ranked:
            writer.writerow([tok, repr(r)])
