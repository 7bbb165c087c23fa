import math
import random
from collections import Counter, defaultdict

import apsw
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusdb.errors import DomainError, PreconditionError
from corpusdb.metrics import (
    AuthorCountEstimate, FieldPairStat, classify_title, estimate_author_count, field_pair_stats,
    h5_index, h_index, h_index_grouped, impact_factor, impact_factor_details, is_citable,
    page_count, pseudo_random_rank, synthesis_counts,
)
from corpusdb.populate import populate_reference_tables
from corpusdb.synthetic import write_csv

from oracles import db_from_works, h_index_oracle, work

ISSN = [("1111-1111", "print")]


def journal_fixture(tmp_path, prior_pages=("1-10", None), citations=6, extra=()):
    prior = [work(f"10.1/j{i}", 2019 + i % 2, issns=ISSN, pages=p)
             for i, p in enumerate(prior_pages)]
    targets = [w.doi for w in prior]
    citing = [work(f"10.1/c{i}", 2021, refs=[targets[i % len(targets)]])
              for i in range(citations)]
    return db_from_works(tmp_path, prior + citing + list(extra))


def test_jif_three(tmp_path):
    db = journal_fixture(tmp_path)
    assert impact_factor(db, 2021) == [("1111-1111", 3.0)]


def test_jif_short_work_not_citable(tmp_path):
    db = journal_fixture(tmp_path, prior_pages=("1-10", None, "1-2"))
    (row,) = impact_factor_details(db, 2021)
    assert row.citable_items == 2 and row.citations == 6 and row.jif == 3.0


def test_jif_four_pages_citable(tmp_path):
    db = journal_fixture(tmp_path, prior_pages=("1-10", None, "1-4"))
    (row,) = impact_factor_details(db, 2021)
    assert row.citable_items == 3


def test_jif_zero_citations(tmp_path):
    db = journal_fixture(tmp_path, citations=0, extra=[work("10.1/other", 2021)])
    assert impact_factor(db, 2021) == [("1111-1111", 0.0)]


def test_jif_old_citations_ignored(tmp_path):
    late = [work("10.1/late", 2022, refs=["10.1/j0"]), work("10.1/early", 2020, refs=["10.1/j1"])]
    db = journal_fixture(tmp_path, extra=late)
    assert impact_factor(db, 2021) == [("1111-1111", 3.0)]


def test_jif_missing_years_warns(tmp_path):
    db = db_from_works(tmp_path, [work("10.1/a", 2010)])
    with pytest.warns(UserWarning):
        assert impact_factor(db, 2021) == []


def test_jif_keyed_by_every_issn(tmp_path):
    issns = [("1111-1111", "print"), ("2222-2222", "electronic")]
    prior = [work("10.1/p", 2020, issns=issns)]
    db = db_from_works(tmp_path, prior + [work("10.1/c", 2021, refs=["10.1/p"])])
    journals = tmp_path / "journals.csv"
    write_csv(journals, ["title", "issn_print", "issn_electronic", "issn_additional"],
              [("J", "1111-1111", "2222-2222", "3333-3333; 4444-4444"),
               ("K", "4444-4444", "", "")])
    populate_reference_tables(db, journals=journals)
    # 4444-4444 is another journal's primary ISSN
    assert impact_factor(db, 2021) == [(i, 1.0) for i in ("1111-1111", "2222-2222", "3333-3333")]


def test_jif_matches_filter_and_count(full_db):
    con = apsw.Connection(str(full_db))
    details = impact_factor_details(full_db, 2021)
    assert details
    for row in details:
        issn = row.journal
        if issn.startswith("journal:"):
            continue
        prior = con.execute(
            "SELECT doi, page FROM works WHERE published_year IN (2019, 2020) AND "
            "Coalesce(issn_print, issn_electronic) = ?", (issn,)).fetchall()
        assert row.citable_items == sum(1 for _, p in prior if is_citable(p))
        dois = {d.lower() for d, _ in prior}
        cites = con.execute(
            "SELECT r.doi FROM work_references r JOIN works w ON w.id = r.work_id "
            "WHERE w.published_year = 2021 AND r.doi IS NOT NULL").fetchall()
        assert row.citations == sum(1 for (d,) in cites if d.lower() in dois)


def test_jif_needs_tables(tmp_path):
    con = apsw.Connection(str(tmp_path / "e.db"))
    con.execute("CREATE TABLE x(y)")
    con.close()
    with pytest.raises(PreconditionError):
        impact_factor(tmp_path / "e.db", 2021)


@pytest.mark.parametrize("pages, expected", [
    ("100-110", 11), ("1-1", 1), (" 5 - 9 ", 5), ("234-2366", None),
    ("1744-8069-5-32", None), ("10-9", None), ("e123", None), ("", None), (None, None),
    ("1-1000", 1000), ("1-1001", None),
])
def test_page_count(pages, expected):
    assert page_count(pages) == expected


@pytest.mark.parametrize("pages, citable", [("1-2", False), ("1-3", True), ("1-4", True),
                                            (None, True), ("7", True)])
def test_citability(pages, citable):
    assert is_citable(pages) is citable


def test_h_index_example():
    # the fifth largest count is 4, so only four works clear their rank
    assert h_index([9, 7, 5, 5, 4, 1]) == h_index_oracle([9, 7, 5, 5, 4, 1]) == 4
    assert h_index([9, 7, 5, 5, 5, 1]) == 5
    assert h_index([]) == 0
    assert h_index([0, 0]) == 0


@given(st.lists(st.integers(0, 60), max_size=80))
@settings(max_examples=300)
def test_h_index_matches_oracle(counts):
    assert h_index(counts) == h_index_oracle(counts)


def test_h_index_grouped():
    pairs = [("a", 3), ("a", 3), ("a", 3), ("b", 1), ("a", 0)]
    assert h_index_grouped(pairs) == {"a": 3, "b": 1}


def h5_oracle(full_db, census, entity):
    con = apsw.Connection(str(full_db))
    cited = Counter()
    for (doi,) in con.execute("SELECT r.doi FROM work_references r JOIN works w "
                              "ON w.id = r.work_id WHERE w.published_year <= ? "
                              "AND r.doi IS NOT NULL", (census,)):
        cited[doi.lower()] += 1
    if entity == "journal":
        rows = con.execute("SELECT id, doi, Coalesce(issn_print, issn_electronic) FROM works "
                           "WHERE published_year BETWEEN ? AND ?", (census - 4, census))
    else:
        rows = con.execute("SELECT w.id, w.doi, a.orcid FROM works w JOIN work_authors a "
                           "ON a.work_id = w.id WHERE published_year BETWEEN ? AND ?",
                           (census - 4, census))
    per_entity = defaultdict(dict)
    for wid, doi, key in rows:
        if key is not None:
            per_entity[key][wid] = cited[doi.lower()]
    return sorted((k, h_index_oracle(v.values())) for k, v in per_entity.items())


@pytest.mark.parametrize("entity", ["journal", "person"])
def test_h5_matches_python(full_db, entity):
    got = h5_index(full_db, 2022, entity)
    assert got == h5_oracle(full_db, 2022, entity)
    assert any(h > 0 for _, h in got)


def test_h5_unknown_entity(full_db):
    with pytest.raises(DomainError):
        h5_index(full_db, 2022, "funder")


def test_pseudo_random_rank_examples():
    assert pseudo_random_rank(123, 9973, 4) == 6679
    assert pseudo_random_rank(123_456_789, 1, 9) == 123_456_789
    assert pseudo_random_rank(5, 7, 2) == pseudo_random_rank(5, 7, 2)


@pytest.mark.parametrize("seed, digits", [(9973, 4), (7, 3), (3, 1), (101, 2)])
def test_pseudo_random_rank_surjective(seed, digits):
    assert math.gcd(seed, 10 ** digits) == 1
    ranks = {pseudo_random_rank(i, seed, digits) for i in range(1, 10 ** digits + 1)}
    assert ranks == set(range(10 ** digits))


@pytest.mark.parametrize("args", [(0, 1, 3), (1, 0, 3), (1, 1, 0), (1, 1, 10), (-4, 3, 2)])
def test_pseudo_random_rank_domain(args):
    with pytest.raises(DomainError):
        pseudo_random_rank(*args)


def test_author_estimate_formula():
    e = AuthorCountEstimate(100, 30, 28)
    assert e.estimate == pytest.approx(100 * 30 / 28) and round(e.estimate, 2) == 107.14
    assert AuthorCountEstimate(100, 30, 30).estimate == 100
    low = AuthorCountEstimate(40, 0, 0)
    assert low.low_confidence and low.estimate == 40


def test_author_estimate_over_fixture(full_db):
    con = apsw.Connection(str(full_db))
    rows = con.execute("SELECT a.given, a.family, a.orcid FROM work_authors a JOIN works w "
                       "ON w.id = a.work_id WHERE w.published_year >= 2020").fetchall()
    e = estimate_author_count(full_db, "works.published_year >= 2020")
    assert e.n_an == len({(g, f) for g, f, _ in rows})
    assert e.n_o == len({o for _, _, o in rows if o})
    assert e.n_on == len({(g, f) for g, f, o in rows if o})
    assert not e.low_confidence


def test_author_estimate_homonyms(tmp_path):
    from corpusdb.sources import AuthorRecord
    # one name worn by two people, one person writing two names
    authors = [
        [AuthorRecord("Li", "Wei", orcid="0000-0002-1825-0097")],
        [AuthorRecord("Li", "Wei", orcid="0000-0002-1694-233X")],
        [AuthorRecord("Ann", "Lee", orcid="0000-0001-5109-3700")],
        [AuthorRecord("A.", "Lee", orcid="0000-0001-5109-3700")],
        [AuthorRecord("Bo", "Kim")],
    ]
    works = [work(f"10.1/{i}", authors=a) for i, a in enumerate(authors)]
    e = estimate_author_count(db_from_works(tmp_path, works))
    assert (e.n_an, e.n_o, e.n_on) == (4, 3, 3)


def test_field_pair_arithmetic():
    s = FieldPairStat(1503, 2505, 80, 20)
    assert s.strength == 100 and s.fundamentalness_of_a == 0.8


def field_pair_oracle(full_db, general):
    con = apsw.Connection(str(full_db))
    code = dict(con.execute("SELECT description, code FROM asjc_codes"))
    # rolling up happens per detailed pair, so pairs inside one general field vanish
    detailed = defaultdict(set)
    for wid, name in con.execute("SELECT work_id, name FROM work_subjects"):
        c = code.get(name)
        if c is not None and c != 1000:
            detailed[wid].add(c)
    ids = {d.lower(): i for i, d in con.execute("SELECT id, doi FROM works")}
    counts = Counter()
    for citing, doi in con.execute("SELECT work_id, doi FROM work_references "
                                   "WHERE doi IS NOT NULL"):
        cited = ids.get(doi.lower())
        if cited is None:
            continue
        for a in detailed[citing]:
            for b in detailed[cited]:
                ka, kb = (a // 100 * 100, b // 100 * 100) if general else (a, b)
                if ka != kb:
                    counts[ka, kb] += 1
    pairs = {tuple(sorted(k)) for k in counts}
    return [(a, b, counts[a, b], counts[b, a]) for a, b in sorted(pairs)]


@pytest.mark.parametrize("general", [False, True])
def test_field_pairs_match_oracle(full_db, general):
    got = [(s.field_a, s.field_b, s.citations_ab, s.citations_ba)
           for s in field_pair_stats(full_db, general)]
    assert got == field_pair_oracle(full_db, general)
    assert got


def test_field_pairs_exclude_self_and_multidisciplinary(tmp_path, dataset):
    works = [
        work("10.1/a", subjects=["Catalysis"]),
        work("10.1/b", subjects=["Catalysis"], refs=["10.1/a"]),
        work("10.1/c", subjects=["Multidisciplinary"], refs=["10.1/a"]),
        work("10.1/d", subjects=["Oncology"], refs=["10.1/a", "10.1/b", "10.1/c"]),
    ]
    db = db_from_works(tmp_path, works)
    populate_reference_tables(db, asjc=dataset["asjc"])
    stats = field_pair_stats(db)
    con = apsw.Connection(str(db))
    code = dict(con.execute("SELECT description, code FROM asjc_codes"))
    (s,) = stats
    assert {s.field_a, s.field_b} == {code["Catalysis"], code["Oncology"]}
    ab = s.citations_ab if s.field_a == code["Oncology"] else s.citations_ba
    assert ab == 2 and s.strength == 2


TITLES = [
    ("A systematic review of X", "SLR"),
    ("Bibliometric analysis of Y", "BM"),
    ("On the design of widgets", "NONE"),
    ("A Systematic Review and Meta-Analysis of statins", "SLR"),
    ("Meta-analysis of trials: a systematic literature review", "SLR"),
    ("A systematic mapping study of testing", "SLR"),
    ("Meta-analysis of dietary fibre", "MA"),
    ("An umbrella review and meta-analysis", "MA"),
    ("An umbrella review of exercise", "TER/UR"),
    ("A tertiary study of software reviews", "TER/UR"),
    ("A mapping review of robotics", "MR"),
    ("Bibliometric and scientometric views", "BM"),
    ("A scientometric study of chemistry", "SM"),
    ("A literature review of graph databases", "SEC"),
    ("A literature survey on caching", "SEC"),
    ("Secondary study of code smells", "SEC"),
    ("Bibliometric literature review of tourism", "BM"),
    ("SYSTEMATIC\n REVIEW of sleep", "SLR"),
    ("Reviewing systems", "NONE"),
    ("", "NONE"),
]


@pytest.mark.parametrize("title, category", TITLES)
def test_classify_title(title, category):
    assert classify_title(title) == category


def test_dual_phrase_is_slr():
    rng = random.Random(3)
    for _ in range(50):
        words = ["meta-analysis", "systematic review", "of", "drugs", "a", "and"]
        rng.shuffle(words)
        assert classify_title(" ".join(words)) == "SLR"


def test_synthesis_counts(full_db):
    con = apsw.Connection(str(full_db))
    expected = Counter(
        (y, classify_title(t)) for y, t in con.execute(
            "SELECT published_year, title FROM works WHERE title IS NOT NULL"))
    got = synthesis_counts(full_db)
    assert {(y, c): n for y, c, n in got} == {k: v for k, v in expected.items() if k[1] != "NONE"}
    assert got
