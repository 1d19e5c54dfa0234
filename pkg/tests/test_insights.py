import math
from datetime import date, datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from threatcast import insights
from threatcast.errors import ValidationError
from threatcast.linker import Link, LinkTable
from threatcast.nvd import CveRecord, NvdStore


def test_log_odds_reference_value():
    severe = [["critical"]] * 3 + [["x"]] * 7
    other = [["critical"]] + [["x"]] * 9
    # ((3.5 / 7.5) / (1.5 / 9.5)) -> ln = 1.0837
    assert insights.log_odds("critical", severe, other) == pytest.approx(1.0837, abs=1e-4)


def test_log_odds_counts_documents_not_tokens():
    assert insights.log_odds("a", [["a", "a", "a"], ["b"]], [["b"], ["b"]]) == \
        insights.log_odds("a", [["a"], ["b"]], [["b"], ["b"]])


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_log_odds_antisymmetric(a, extra_a, b, extra_b):
    A, B = a + extra_a + 1, b + extra_b + 1
    sev = [["t"]] * a + [["u"]] * (A - a)
    oth = [["t"]] * b + [["u"]] * (B - b)
    assert insights.log_odds("t", sev, oth) == pytest.approx(-insights.log_odds("t", oth, sev), abs=1e-12)


def test_rank_adjectives_uses_lexicon():
    severe = [["critical", "remote"], ["critical"], ["serious"]]
    other = [["minor"], ["minor", "remote"], ["serious"]]
    ranked = insights.rank_adjectives(severe, other, {"critical", "minor", "serious"}, k=2)
    assert [t for t, _ in ranked] == ["critical", "serious"]
    assert ranked[1][1] == pytest.approx(0.0)


def test_empty_sides_rejected():
    with pytest.raises(ValidationError):
        insights.log_odds("x", [], [["x"]])


def test_lexicon_formats(tmp_path):
    plain = tmp_path / "adj.txt"
    plain.write_text("# adjectives\nCritical\nminor\n")
    assert insights.load_lexicon(plain) == {"critical", "minor"}
    mpqa = tmp_path / "mpqa.tff"
    mpqa.write_text("type=strongsubj len=1 word1=abysmal pos1=adj stemmed1=n\n"
                    "type=weaksubj len=1 word1=abandon pos1=verb stemmed1=y\n")
    assert insights.load_lexicon(mpqa) == {"abysmal"}


def _delay_fixture(leads):
    store, table = NvdStore(), LinkTable()
    pub = date(2016, 6, 1)
    for i, lead in enumerate(leads):
        cve = f"CVE-2016-{i + 1:04d}"
        store.add(CveRecord(cve, pub))
        when = datetime(2016, 6, 1, 12, tzinfo=timezone.utc) - timedelta(days=lead)
        table.add(Link(cve, f"t{i}", when, "text"))
    return table, store


def test_delay_stats_reference():
    table, store = _delay_fixture([1, 5, 100, 0, -3])
    stats = insights.delay_stats(table, store)
    assert sorted(stats.leads.values()) == [1, 5, 100]
    assert stats.median == 5 and stats.within_60 == pytest.approx(2 / 3)


def test_delay_median_is_lower_middle():
    table, store = _delay_fixture([2, 10, 30, 90])
    assert insights.delay_stats(table, store).median == 10


def test_delay_stats_empty():
    table, store = _delay_fixture([0, -1])
    with pytest.raises(ValidationError):
        insights.delay_stats(table, store)


def test_outputs(tmp_path):
    table, store = _delay_fixture([3, 4])
    insights.delay_stats(table, store).write_json(tmp_path / "d.json")
    assert '"median_lead_days": 3' in (tmp_path / "d.json").read_text()
    insights.write_ratios_csv(tmp_path / "r.csv", [("critical", math.log(2))])
    assert (tmp_path / "r.csv").read_text().splitlines()[1].startswith("critical,0.693")
