"""Affiliation to organization linking and subject roll-up."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import apsw

from .aho import Automaton
from .errors import CycleError, DomainError, PreconditionError
from .populate import table_exists
from .schema import LINK_TABLES, ddl_for
from .sources import OrgRecord

log = logging.getLogger(__name__)

DEFAULT_MIN_LENGTH = 3
_KIND_RANK = {"name": 0, "alias": 1, "acronym": 2}


@dataclass(frozen=True)
class MatchResult:
    affiliation_row_id: int
    org: str
    pattern: str
    span: tuple[int, int]


@dataclass
class MatchAutomaton:
    """Pruned pattern dictionary plus the automaton built from it.

    ``entries`` holds ``(pattern, org, kind)`` triples.  ``pruned_reasons``
    maps each removed pattern to ``short``, ``ambiguous`` or ``contained``.
    """

    entries: frozenset
    pruned_reasons: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ordered = sorted(self.entries)
        self._org = {p: org for p, org, _ in ordered}
        self.automaton = Automaton(p for p, _, _ in ordered)

    @property
    def pruned(self) -> frozenset:
        return frozenset(self.pruned_reasons)

    @property
    def patterns(self) -> list[str]:
        return self.automaton.patterns

    def org_of(self, pattern: str) -> str:
        return self._org[pattern]

    def occurrences(self, text: str) -> list[tuple[int, int, str]]:
        """Word-bounded occurrences of surviving patterns in lowercased ``text``."""
        text = text.lower()
        found = []
        for start, end, index in self.automaton.find_all(text):
            if start > 0 and text[start - 1].isalpha():
                continue
            if end < len(text) and text[end].isalpha():
                continue
            found.append((start, end, self.automaton.patterns[index]))
        return found

    def best_match(self, text: str) -> tuple[str, str, tuple[int, int]] | None:
        """Longest occurrence; ties go to the earliest start, then the smaller pattern."""
        best = None
        for start, end, pattern in self.occurrences(text):
            key = (-(end - start), start, pattern)
            if best is None or key < best[0]:
                best = (key, pattern, (start, end))
        if best is None:
            return None
        _, pattern, span = best
        return pattern, self._org[pattern], span


def _normalize(text: str | None) -> str:
    return " ".join(text.split()).lower() if text else ""


def org_patterns(registry: Iterable[OrgRecord]) -> list[tuple[str, str, str]]:
    """All ``(pattern, org, kind)`` candidates of a registry."""
    out = []
    for org in registry:
        out.append((_normalize(org.name), org.ror, "name"))
        out.extend((_normalize(a), org.ror, "alias") for a in org.aliases)
        out.extend((_normalize(a), org.ror, "acronym") for a in org.acronyms)
    return [c for c in out if c[0]]


def prune_candidates(candidates: Iterable[tuple[str, str, str]],
                     min_length: int = DEFAULT_MIN_LENGTH) -> MatchAutomaton:
    """Apply the length floor, ambiguity and containment pruning passes."""
    reasons: dict[str, str] = {}
    owners: dict[str, dict[str, str]] = {}
    for pattern, org, kind in candidates:
        if len(pattern) < min_length:
            reasons[pattern] = "short"
            continue
        kinds = owners.setdefault(pattern, {})
        if org not in kinds or _KIND_RANK[kind] < _KIND_RANK[kinds[org]]:
            kinds[org] = kind
    unique = sorted(owners)
    # pass 1 and 2: scan each pattern through an automaton of all patterns
    first = Automaton(unique)
    for text in unique:
        for start, end, index in first.find_all(text):
            inner = unique[index]
            if inner != text:
                reasons.setdefault(inner, "contained")
    for pattern, orgs in owners.items():
        if len(orgs) > 1:
            reasons[pattern] = "ambiguous"
    entries = frozenset(
        (pattern, org, kind)
        for pattern, orgs in owners.items() if pattern not in reasons
        for org, kind in orgs.items()
    )
    # pass 3 happens in MatchAutomaton.__post_init__
    return MatchAutomaton(entries, reasons)


def build_automaton(registry: Iterable[OrgRecord],
                    min_length: int = DEFAULT_MIN_LENGTH) -> MatchAutomaton:
    registry = list(registry)
    if not registry:
        raise DomainError("organization registry is empty")
    automaton = prune_candidates(org_patterns(registry), min_length)
    log.info("automaton: %d patterns, %d pruned", len(automaton.entries),
             len(automaton.pruned_reasons))
    return automaton


def registry_from_db(db) -> list[OrgRecord]:
    """Organization records as stored by ``populate_reference_tables``."""
    con = apsw.Connection(str(db), flags=apsw.SQLITE_OPEN_READONLY)
    try:
        if not table_exists(con, "research_organizations"):
            raise PreconditionError("research_organizations is not populated")
        orgs = {i: OrgRecord(ror, name) for i, ror, name in
                con.execute("SELECT id, ror_path, name FROM research_organizations")}
        for table, attr, column in (("org_aliases", "aliases", "alias"),
                                    ("org_acronyms", "acronyms", "acronym")):
            if table_exists(con, table):
                for org_id, value in con.execute(f"SELECT org_id, {column} FROM {table}"):
                    if org_id in orgs:
                        getattr(orgs[org_id], attr).append(value)
        return list(orgs.values())
    finally:
        con.close()


def automaton_from_db(db, min_length: int = DEFAULT_MIN_LENGTH) -> MatchAutomaton:
    return build_automaton(registry_from_db(db), min_length)


def match_affiliations(db, automaton: MatchAutomaton | None) -> int:
    """Replace the contents of ``affiliations_rors`` with fresh matches.

    Returns the number of rows written.
    """
    if automaton is None:
        raise PreconditionError("no match automaton supplied")
    con = apsw.Connection(str(db))
    try:
        for needed in ("author_affiliations", "research_organizations"):
            if not table_exists(con, needed):
                raise PreconditionError(f"table {needed} is not populated")
        ids = dict(con.execute("SELECT ror_path, id FROM research_organizations"))
        rows = []
        for affiliation_id, name in con.execute(
                "SELECT id, name FROM author_affiliations WHERE name IS NOT NULL"):
            match = automaton.best_match(name)
            if match is not None and match[1] in ids:
                rows.append((affiliation_id, ids[match[1]]))
        with con:
            con.execute(ddl_for(LINK_TABLES[0], if_not_exists=True))
            con.execute("DELETE FROM affiliations_rors")
            con.executemany("INSERT INTO affiliations_rors VALUES (?, ?)", rows)
        return len(rows)
    finally:
        con.close()


def _check_cycles(con) -> None:
    parent = dict(con.execute(
        "SELECT o.ror_path, p.ror_path FROM org_relationships r "
        "JOIN research_organizations o ON o.id = r.org_id "
        "JOIN research_organizations p ON p.ror_path = r.ror_path "
        "WHERE r.type = 'Parent'"
    ))
    done: set[str] = set()
    for start in sorted(parent):
        path, seen = [], {}
        node = start
        while node in parent and node not in done:
            if node in seen:
                raise CycleError(path[seen[node]:] + [node])
            seen[node] = len(path)
            path.append(node)
            node = parent[node]
        done.update(path)


_SENIOR_SQL = """
WITH RECURSIVE parents(org_id, parent_id) AS (
  SELECT r.org_id, p.id FROM org_relationships r
  JOIN research_organizations p ON p.ror_path = r.ror_path
  WHERE r.type = 'Parent'
),
lineage(org_id, ancestor_id, generation) AS (
  SELECT DISTINCT ror_id, ror_id, 0 FROM affiliations_rors
  UNION
  SELECT l.org_id, p.parent_id, l.generation + 1
  FROM lineage l JOIN parents p ON p.org_id = l.ancestor_id
),
ranked AS (
  SELECT org_id, ancestor_id, Row_Number() OVER (
    PARTITION BY org_id ORDER BY generation DESC, ancestor_id) AS seniority
  FROM lineage
)
SELECT org_id, ancestor_id FROM ranked WHERE seniority = 1 AND org_id != ancestor_id
"""


def propagate_to_parent(db) -> int:
    """Point every matched organization link at its most senior ancestor.

    Returns the number of link rows changed; a second application
    changes nothing.
    """
    con = apsw.Connection(str(db))
    try:
        for needed in ("affiliations_rors", "research_organizations", "org_relationships"):
            if not table_exists(con, needed):
                raise PreconditionError(f"table {needed} is not populated")
        _check_cycles(con)
        with con:
            senior = con.execute(_SENIOR_SQL).fetchall()
            before = con.total_changes()
            con.executemany(
                "UPDATE affiliations_rors SET ror_id = ? WHERE ror_id = ?",
                [(ancestor, org) for org, ancestor in senior],
            )
            return con.total_changes() - before
    finally:
        con.close()


def asjc_general_field(code: int) -> int:
    """The general field (code ending in 00) a subject code belongs to."""
    if isinstance(code, bool) or not isinstance(code, int) or not 1000 <= code <= 9999:
        raise DomainError(f"not a four-digit subject code: {code!r}")
    return code // 100 * 100
