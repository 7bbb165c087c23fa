"""Journal, author and field measures computed over a populated database."""

from __future__ import annotations

import logging
import re
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable

import apsw

from ..errors import DomainError, PreconditionError
from ..link import asjc_general_field
from ..populate import table_exists

log = logging.getLogger(__name__)

MAX_PAGES = 1000


def _read_only(db) -> apsw.Connection:
    return apsw.Connection(str(db), flags=apsw.SQLITE_OPEN_READONLY)


def _require(con, *tables):
    for name in tables:
        if not table_exists(con, name):
            raise PreconditionError(f"table {name} is not populated")


# pages

def page_count(pages: str | None) -> int | None:
    """Number of pages in an ``A-B`` range, or None when the range is unusable."""
    if pages is None:
        return None
    parts = pages.strip().split("-")
    if len(parts) != 2:
        return None
    first, last = (p.strip() for p in parts)
    if not (first.isdigit() and last.isdigit()):
        return None
    span = int(last) - int(first) + 1
    if span < 1 or span > MAX_PAGES:
        return None
    return span


def is_citable(pages: str | None) -> bool:
    """Works longer than two pages, and works without a usable page range."""
    count = page_count(pages)
    return count is None or count > 2


# impact factor

@dataclass
class JournalImpact:
    journal: str
    issns: tuple[str, ...]
    citations: int
    citable_items: int

    @property
    def jif(self) -> float:
        return self.citations / self.citable_items


def _journal_keys(con) -> dict[str, str]:
    """Map each ISSN to a journal key, honouring primary ISSNs first."""
    if not table_exists(con, "journal_issns"):
        return {}
    mapping: dict[str, str] = {}
    rows = con.execute("SELECT journal_id, issn, issn_type FROM journal_issns").fetchall()
    for journal, issn, kind in rows:
        if kind in ("print", "electronic") and issn:
            mapping.setdefault(issn, f"journal:{journal}")
    for journal, issn, kind in rows:
        if kind not in ("print", "electronic") and issn:
            mapping.setdefault(issn, f"journal:{journal}")
    return mapping


def impact_factor_details(db, census_year: int) -> list[JournalImpact]:
    """Per-journal numerator and denominator of the two-year impact factor."""
    con = _read_only(db)
    try:
        _require(con, "works", "work_references")
        journal_of = _journal_keys(con)
        years = (census_year - 2, census_year - 1)
        target: dict[str, str] = {}
        issns = defaultdict(set)
        citable = Counter()
        have_prior = False
        for doi, issn_print, issn_electronic, pages in con.execute(
                "SELECT doi, issn_print, issn_electronic, page FROM works "
                "WHERE published_year IN (?, ?)", years):
            have_prior = True
            key = None
            for issn in (issn_print, issn_electronic):
                if issn and issn in journal_of:
                    key = journal_of[issn]
                    break
            if key is None:
                key = issn_print or issn_electronic
            if key is None:
                continue
            issns[key].update(i for i in (issn_print, issn_electronic) if i)
            if doi:
                target[doi.lower()] = key
            if is_citable(pages):
                citable[key] += 1
        has_census = con.execute(
            "SELECT 1 FROM works WHERE published_year = ? LIMIT 1", (census_year,)
        ).fetchone()
        if not have_prior or not has_census:
            warnings.warn(f"no works for the impact factor window of {census_year}")
            return []
        citations = Counter()
        for (ref,) in con.execute(
                "SELECT r.doi FROM work_references r JOIN works w ON w.id = r.work_id "
                "WHERE w.published_year = ? AND r.doi IS NOT NULL", (census_year,)):
            key = target.get(ref.lower())
            if key is not None:
                citations[key] += 1
        if table_exists(con, "journal_issns"):
            for journal, issn, _ in con.execute("SELECT journal_id, issn, issn_type "
                                                "FROM journal_issns"):
                key = f"journal:{journal}"
                if key in issns and journal_of.get(issn) == key:
                    issns[key].add(issn)
    finally:
        con.close()
    return [
        JournalImpact(key, tuple(sorted(issns[key])), citations[key], citable[key])
        for key in sorted(issns) if citable[key] > 0
    ]


def impact_factor(db, census_year: int) -> list[tuple[str, float]]:
    """``(issn, jif)`` for every ISSN under which a journal is known."""
    return sorted(
        (issn, j.jif) for j in impact_factor_details(db, census_year) for issn in j.issns
    )


# h-index family

def h_index(counts: Iterable[int]) -> int:
    """Largest k such that k of the counts are at least k."""
    h = 0
    for rank, c in enumerate(sorted(counts, reverse=True), start=1):
        if c < rank:
            break
        h = rank
    return h


def h_index_grouped(pairs: Iterable[tuple[object, int]]) -> dict:
    """h-index per key from ``(key, citation_count)`` pairs, one per work."""
    groups = defaultdict(list)
    for key, count in pairs:
        groups[key].append(count)
    return {key: h_index(counts) for key, counts in groups.items()}


_H5_SQL = """
WITH window_works AS (
  SELECT w.id, Lower(w.doi) AS doi, {key} AS entity
  FROM works w {join}
  WHERE w.published_year BETWEEN :first AND :last AND {key} IS NOT NULL
    AND w.doi IS NOT NULL
),
cited AS (
  SELECT Lower(r.doi) AS doi, Count(*) AS citations
  FROM work_references r JOIN works c ON c.id = r.work_id
  WHERE r.doi IS NOT NULL AND c.published_year <= :last
  GROUP BY Lower(r.doi)
),
per_work AS (
  SELECT DISTINCT entity, window_works.id, Coalesce(cited.citations, 0) AS citations
  FROM window_works LEFT JOIN cited ON cited.doi = window_works.doi
),
ranked AS (
  SELECT entity, citations,
    Row_Number() OVER (PARTITION BY entity ORDER BY citations DESC) AS rank
  FROM per_work
)
SELECT entity, Sum(rank <= citations) AS h5 FROM ranked GROUP BY entity ORDER BY entity
"""

_H5_KEYS = {
    "journal": ("Coalesce(w.issn_print, w.issn_electronic)", ""),
    "person": ("a.orcid", "JOIN work_authors a ON a.work_id = w.id"),
}


def h5_index(db, census_year: int, entity: str = "journal",
             window_years: int = 5) -> list[tuple[str, int]]:
    """h5-index per journal or per ORCID over works of the trailing window.

    Citations are counted from works published up to the census year.
    """
    if entity not in _H5_KEYS:
        raise DomainError(f"unknown h5 entity {entity!r}")
    key, join = _H5_KEYS[entity]
    con = _read_only(db)
    try:
        _require(con, "works", "work_references", *(["work_authors"] if join else []))
        con.execute("PRAGMA temp_store = MEMORY")
        sql = _H5_SQL.format(key=key, join=join)
        return [tuple(r) for r in con.execute(
            sql, {"first": census_year - window_years + 1, "last": census_year})]
    finally:
        con.close()


# sampling and author counts

def pseudo_random_rank(id: int, seed: int, digits: int) -> int:
    """Last ``digits`` decimal digits of ``id * seed``."""
    if id < 1 or seed < 1:
        raise DomainError("id and seed must be positive")
    if not 1 <= digits <= 9:
        raise DomainError("digits must be between 1 and 9")
    return (id * seed) % 10 ** digits


@dataclass(frozen=True)
class AuthorCountEstimate:
    n_an: int
    n_o: int
    n_on: int

    @property
    def low_confidence(self) -> bool:
        return self.n_o == 0

    @property
    def estimate(self) -> float:
        if self.n_o == 0:
            return float(self.n_an)
        return self.n_an * self.n_o / self.n_on


def estimate_author_count(db, where: str | None = None) -> AuthorCountEstimate:
    """Estimate distinct authors of the works matching ``where``.

    ``where`` is an SQL condition over ``works``; None selects all works.
    Name pairs overcount people who write their names differently and
    undercount homonyms; scaling by the ORCID-bearing subset corrects both.
    """
    condition = f"WHERE {where}" if where else ""
    con = _read_only(db)
    try:
        _require(con, "works", "work_authors")
        sql = f"""
            WITH authors AS (
              SELECT a.given, a.family, a.orcid FROM work_authors a
              WHERE a.work_id IN (SELECT works.id FROM works {condition})
            )
            SELECT
              (SELECT Count(*) FROM (SELECT DISTINCT given, family FROM authors)),
              (SELECT Count(DISTINCT orcid) FROM authors),
              (SELECT Count(*) FROM (SELECT DISTINCT given, family FROM authors
                                     WHERE orcid IS NOT NULL))
        """
        n_an, n_o, n_on = con.execute(sql).fetchone()
    finally:
        con.close()
    return AuthorCountEstimate(n_an, n_o, n_on)


# subject fields

@dataclass(frozen=True)
class FieldPairStat:
    field_a: int
    field_b: int
    citations_ab: int
    citations_ba: int

    @property
    def strength(self) -> int:
        return self.citations_ab + self.citations_ba

    @property
    def fundamentalness_of_a(self) -> float:
        return self.citations_ab / self.strength


MULTIDISCIPLINARY = 1000


def field_citations(db, general: bool = False) -> Counter:
    """Citation counts between subject codes, keyed ``(citing, cited)``."""
    con = _read_only(db)
    try:
        _require(con, "works", "work_references", "work_subjects", "asjc_codes")
        con.execute("PRAGMA temp_store = MEMORY")
        rows = con.execute(f"""
            WITH subjects AS (
              SELECT DISTINCT s.work_id, a.code FROM work_subjects s
              JOIN asjc_codes a ON a.description = s.name
              WHERE a.code != {MULTIDISCIPLINARY} AND a.description != 'Multidisciplinary'
            ),
            cited AS (SELECT id, Lower(doi) AS doi FROM works WHERE doi IS NOT NULL)
            SELECT a.code, b.code, Count(*)
            FROM work_references r
            JOIN cited ON cited.doi = Lower(r.doi)
            JOIN subjects a ON a.work_id = r.work_id
            JOIN subjects b ON b.work_id = cited.id
            GROUP BY a.code, b.code
        """).fetchall()
    finally:
        con.close()
    counts = Counter()
    for citing, cited, n in rows:
        if general:
            citing, cited = asjc_general_field(citing), asjc_general_field(cited)
        if citing != cited:
            counts[citing, cited] += n
    return counts


def field_pair_stats(db, general: bool = False) -> list[FieldPairStat]:
    """Mutual citation statistics for every pair of distinct fields."""
    counts = field_citations(db, general)
    pairs = {tuple(sorted(k)) for k in counts}
    return [FieldPairStat(a, b, counts[a, b], counts[b, a]) for a, b in sorted(pairs)]


# research synthesis titles

PHRASES = (
    ("SLR", ("systematic review", "systematic literature review", "systematic mapping study")),
    ("MA", ("meta-analysis",)),
    ("TER/UR", ("tertiary study", "umbrella review")),
    ("MR", ("mapping review",)),
    ("BM", ("bibliometric",)),
    ("SM", ("scientometric",)),
    ("SEC", ("secondary study", "literature survey", "literature review")),
)
CATEGORIES = tuple(c for c, _ in PHRASES) + ("NONE",)
_PATTERNS = [(c, re.compile("|".join(re.escape(p) for p in ps))) for c, ps in PHRASES]


def classify_title(title: str | None) -> str:
    """Research synthesis category of a title, by phrase precedence."""
    text = " ".join((title or "").lower().split())
    for category, pattern in _PATTERNS:
        if pattern.search(text):
            return category
    return "NONE"


def synthesis_counts(db) -> list[tuple[int | None, str, int]]:
    """``(year, category, works)`` for every category found among titled works."""
    con = _read_only(db)
    try:
        _require(con, "works")
        counts = Counter(
            (year, classify_title(title))
            for year, title in con.execute(
                "SELECT published_year, title FROM works WHERE title IS NOT NULL")
        )
    finally:
        con.close()
    order = {c: i for i, c in enumerate(CATEGORIES)}
    return sorted(
        ((y, c, n) for (y, c), n in counts.items() if c != "NONE"),
        key=lambda r: (r[0] is None, r[0] or 0, order[r[1]]),
    )

