"""NVD records, CVSS qualitative bands and exploit ground-truth lists."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Iterator, Mapping

from .errors import ValidationError

logger = logging.getLogger(__name__)

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")
SEVERE_CUTOFF = 7.0


class Severity(str, Enum):
    NONE = "None"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return list(Severity).index(self)


@dataclass(frozen=True)
class CveRecord:
    cve_id: str
    published_at: date
    description: str = ""
    cvss_v2: float | None = None
    cvss_v3: float | None = None

    def __post_init__(self):
        if not CVE_ID_RE.match(self.cve_id):
            raise ValidationError(f"malformed CVE id {self.cve_id!r}")
        for name in ("cvss_v2", "cvss_v3"):
            score = getattr(self, name)
            if score is not None and not 0.0 <= score <= 10.0:
                raise ValidationError(f"{self.cve_id}: {name}={score} outside [0, 10]")


def categorize(score: float, version: str = "v3") -> Severity:
    if not 0.0 <= score <= 10.0:
        raise ValidationError(f"CVSS score {score} outside [0, 10]")
    if version == "v2":
        if score < 4.0:
            return Severity.LOW
        return Severity.MEDIUM if score < 7.0 else Severity.HIGH
    if version != "v3":
        raise ValidationError(f"unknown CVSS version {version!r}")
    if score == 0.0:
        return Severity.NONE
    if score < 4.0:
        return Severity.LOW
    if score < 7.0:
        return Severity.MEDIUM
    return Severity.HIGH if score < 9.0 else Severity.CRITICAL


def is_severe(record: CveRecord) -> bool:
    """v3 score >= 7.0; records without v3 fall back to v2 >= 7.0."""
    if record.cvss_v3 is not None:
        return record.cvss_v3 >= SEVERE_CUTOFF
    if record.cvss_v2 is not None:
        return record.cvss_v2 >= SEVERE_CUTOFF
    raise ValidationError(f"{record.cve_id} has no CVSS score")


def best_score(record: CveRecord) -> float | None:
    return record.cvss_v3 if record.cvss_v3 is not None else record.cvss_v2


@dataclass
class NvdStore(Mapping[str, CveRecord]):
    records: dict[str, CveRecord] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def __getitem__(self, key: str) -> CveRecord:
        return self.records[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: CveRecord) -> None:
        old = self.records.get(record.cve_id)
        if old is None or record.published_at >= old.published_at:
            self.records[record.cve_id] = record


def _parse_date(value) -> date:
    if not isinstance(value, str) or len(value) < 10:
        raise ValidationError(f"malformed date {value!r}")
    try:
        return date.fromisoformat(value[:10])
    except ValueError:
        raise ValidationError(f"malformed date {value!r}") from None


def _parse_score(value) -> float | None:
    if value is None or value == "":
        return None
    return float(value)


def record_from_json(obj: dict) -> CveRecord:
    try:
        return CveRecord(
            cve_id=str(obj["cve_id"]).strip(),
            published_at=_parse_date(obj["published"]),
            description=str(obj.get("description") or ""),
            cvss_v2=_parse_score(obj.get("cvss_v2")),
            cvss_v3=_parse_score(obj.get("cvss_v3")),
        )
    except KeyError as exc:
        raise ValidationError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None


def record_to_json(record: CveRecord) -> dict:
    return {
        "cve_id": record.cve_id,
        "published": record.published_at.isoformat(),
        "description": record.description,
        "cvss_v2": record.cvss_v2,
        "cvss_v3": record.cvss_v3,
    }


def load_nvd(paths: Iterable) -> NvdStore:
    """Load newline-delimited JSON records, or official ``.json`` feeds. Bad records are logged and skipped."""
    store = NvdStore()
    for path in [paths] if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__") else paths:
        if str(path).endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                feed = json.load(fh)
            for n, obj in enumerate(convert_feed(feed)):
                try:
                    store.add(record_from_json(obj))
                except ValidationError as exc:
                    msg = f"{path}: item {n}: {exc}"
                    logger.warning(msg)
                    store.errors.append(msg)
            continue
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    store.add(record_from_json(json.loads(line)))
                except (json.JSONDecodeError, ValidationError) as exc:
                    msg = f"{path}:{lineno}: {exc}"
                    logger.warning(msg)
                    store.errors.append(msg)
    return store


def dump_nvd(store: Mapping[str, CveRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cve_id in sorted(store):
            fh.write(json.dumps(record_to_json(store[cve_id]), ensure_ascii=False, sort_keys=True) + "\n")


def load_exploits(paths: Iterable, errors: list[str] | None = None) -> frozenset[str]:
    """Union of newline-delimited CVE lists; ``#`` starts a comment."""
    out: set[str] = set()
    for path in [paths] if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__") else paths:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                entry = line.split("#", 1)[0].strip()
                if not entry:
                    continue
                if not CVE_ID_RE.match(entry):
                    msg = f"{path}:{lineno}: malformed CVE id {entry!r}"
                    logger.warning(msg)
                    if errors is not None:
                        errors.append(msg)
                    continue
                out.add(entry)
    return frozenset(out)


def convert_feed(feed: dict) -> Iterator[dict]:
    """Flatten an official NVD JSON 1.1 feed (``CVE_Items``) into the record format."""
    for item in feed.get("CVE_Items", []):
        cve = item.get("cve", {})
        impact = item.get("impact", {})
        descs = cve.get("description", {}).get("description_data", [])
        yield {
            "cve_id": cve.get("CVE_data_meta", {}).get("ID"),
            "published": item.get("publishedDate"),
            "description": next((d.get("value", "") for d in descs if d.get("lang") == "en"), ""),
            "cvss_v2": impact.get("baseMetricV2", {}).get("cvssV2", {}).get("baseScore"),
            "cvss_v3": impact.get("baseMetricV3", {}).get("cvssV3", {}).get("baseScore"),
        }
