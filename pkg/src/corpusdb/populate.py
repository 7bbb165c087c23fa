"""Database population with horizontal and vertical slices.

Container data reach the destination through the virtual tables of
:mod:`corpusdb.container_tables`, attached to the writer session as the
``crossref`` database.  With a row expression, each container is
processed as follows:

1. in-memory mirror tables receive the keys, foreign keys and
   expression columns of every table involved;
2. the expression is evaluated over the join of the mirrors (in
   topological order), producing the identifiers of matched works;
3. every populated table receives, in batches, the container rows
   reachable from the matched works.

A work matches when at least one row of the join of ``works`` with the
child tables named in the expression satisfies it.  A work without rows
in such a child table therefore never matches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import apsw

from .container_tables import ContainerTables, row_id
from .errors import PopulationError, PreconditionError
from .schema import (
    CROSSREF, FLAT, ORCID, ROR, ResolvedSlice, SchemaGraph, SliceSpec, ddl_for, resolve_slice,
    topological_order,
)
from .sources import (
    ContainerSet,
    csv_columns,
    journal_issn_rows,
    read_csv_table,
    read_org_registry,
    read_person_archive,
    sample_containers,
)

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 1000
SOURCE_DB = "crossref"
ROOT = "works"


@dataclass
class PopulationReport:
    containers_processed: int = 0
    rows: dict[str, int] = field(default_factory=dict)
    batches: dict[str, int] = field(default_factory=dict)
    warnings: int = 0
    last_committed_container: int | None = None
    partial: bool = False
    error: str | None = None

    def add(self, table: str, rows: int, batches: int = 1) -> None:
        self.rows[table] = self.rows.get(table, 0) + rows
        self.batches[table] = self.batches.get(table, 0) + batches

    def summary(self) -> str:
        lines = [f"containers processed: {self.containers_processed}"]
        for table in sorted(self.rows):
            lines.append(f"{table}: {self.rows[table]} rows in {self.batches[table]} batches")
        lines.append(f"warnings: {self.warnings}")
        if self.partial:
            lines.append(f"PARTIAL: last committed container {self.last_committed_container}")
        return "\n".join(lines)


def _connect(db, attach: Mapping[str, str] | None = None) -> apsw.Connection:
    con = apsw.Connection(str(db))
    con.execute("PRAGMA temp_store = MEMORY")
    for name, path in (attach or {}).items():
        con.execute(f"ATTACH DATABASE ? AS {name}", (str(path),))
    return con


def table_exists(con: apsw.Connection, name: str) -> bool:
    row = con.execute(
        "SELECT 1 FROM sqlite_master WHERE type = 'table' AND name = ?", (name,)
    ).fetchone()
    return row is not None


def _create_tables(con, schema: SchemaGraph, plan: ResolvedSlice) -> None:
    for name in plan.tables:
        table = schema.table(name).restricted(plan.columns[name])
        con.execute(ddl_for(table, if_not_exists=True))


class _Populator:
    def __init__(self, con, tables: ContainerTables, schema: SchemaGraph,
                 plan: ResolvedSlice, expression: str | None, batch_size: int):
        self.con = con
        self.tables = tables
        self.schema = schema
        self.plan = plan
        self.expression = expression
        self.batch_size = batch_size
        self.mirrored = []
        if expression is not None:
            self.mirrored = topological_order(
                set(plan.expression_tables) | set(plan.tables), schema
            )

    def mirror_columns(self, name: str) -> list[str]:
        table = self.schema.table(name)
        wanted = set(table.structural_columns)
        wanted.update(c for t, c in self.plan.expression_columns if t == name)
        return [c for c in table.column_names if c in wanted]

    def reach(self, name: str) -> str:
        """Condition selecting the container rows reachable from matched works."""
        table = self.schema.table(name)
        if table.parent is None:
            return f"{table.key} IN (SELECT id FROM temp.matched_works)"
        link = table.parent_link
        parent = self.schema.table(table.parent)
        return (
            f"{link.name} IN (SELECT {parent.key} FROM temp.m_{parent.name} "
            f"WHERE {self.reach(parent.name)})"
        )

    def build_mirrors(self, index: int) -> None:
        for name in self.mirrored:
            columns = ", ".join(self.mirror_columns(name))
            self.con.execute(f"CREATE TEMP TABLE m_{name} AS SELECT {columns} "
                             f"FROM {SOURCE_DB}.{name} WHERE 0")
            self.con.execute(f"INSERT INTO temp.m_{name} SELECT {columns} "
                             f"FROM {SOURCE_DB}.{name} WHERE container_id = {index}")
        joins = [f"temp.m_{ROOT} AS {ROOT}"]
        for name in self.plan.expression_tables:
            table = self.schema.table(name)
            if table.parent is None:
                continue
            parent = self.schema.table(table.parent)
            joins.append(
                f"JOIN temp.m_{name} AS {name} "
                f"ON {name}.{table.parent_link.name} = {parent.name}.{parent.key}"
            )
        self.con.execute(
            "CREATE TEMP TABLE matched_works AS "
            f"SELECT DISTINCT {ROOT}.id AS id FROM {' '.join(joins)} "
            f"WHERE ({self.expression})"
        )

    def drop_mirrors(self) -> None:
        for name in self.mirrored:
            self.con.execute(f"DROP TABLE IF EXISTS temp.m_{name}")
        self.con.execute("DROP TABLE IF EXISTS temp.matched_works")

    def insert(self, index: int, report: PopulationReport) -> None:
        for name in self.plan.tables:
            columns = ", ".join(self.plan.columns[name])
            condition = f"container_id = {index}"
            if self.expression is not None:
                condition += f" AND {self.reach(name)}"
            total = self.tables.row_count(index, name)
            inserted = batches = 0
            for start in range(0, total, self.batch_size):
                low = row_id(index, start)
                high = row_id(index, min(start + self.batch_size, total))
                self.con.execute(
                    f"INSERT INTO main.{name}({columns}) SELECT {columns} "
                    f"FROM {SOURCE_DB}.{name} "
                    f"WHERE {condition} AND rowid >= {low} AND rowid < {high}"
                )
                inserted += self.con.changes()
                batches += 1
            report.add(name, inserted, batches)

    def process(self, index: int, report: PopulationReport) -> None:
        with self.con:
            if self.expression is not None:
                self.build_mirrors(index)
            try:
                self.insert(index, report)
            finally:
                if self.expression is not None:
                    self.drop_mirrors()


def populate(db, source: ContainerSet, spec: SliceSpec = SliceSpec(),
             schema: SchemaGraph = CROSSREF, *, attach: Mapping[str, str] | None = None,
             batch_size: int = DEFAULT_BATCH_SIZE, cache_size: int | None = None,
             resume_after: int | None = None) -> PopulationReport:
    """Populate ``db`` with the slice of ``source`` described by ``spec``.

    Containers are committed one at a time; on failure a
    :class:`PopulationError` carries a report whose
    ``last_committed_container`` allows a rerun with ``resume_after``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    plan = resolve_slice(spec, schema, attach, ROOT)
    if spec.sampling is not None:
        source = sample_containers(source, spec.sampling.probability, spec.sampling.seed)
    tables = ContainerTables(source, schema, cache_size)
    report = PopulationReport()
    con = _connect(db, attach)
    try:
        tables.attach(con, SOURCE_DB)
        with con:
            _create_tables(con, schema, plan)
        populator = _Populator(con, tables, schema, plan, spec.row_expression, batch_size)
        for index, path in source.containers:
            if resume_after is not None and index <= resume_after:
                continue
            log.info("populating from %s", path)
            try:
                populator.process(index, report)
            except (apsw.Error, OSError) as e:
                report.partial = True
                report.error = f"container {index} ({path}): {e}"
                report.warnings = tables.warnings
                raise PopulationError(report.error, report) from e
            report.containers_processed += 1
            report.last_committed_container = index
        report.warnings = tables.warnings
    finally:
        con.close()
    return report


def _insert_batches(con, table: str, columns: Iterable[str], rows: Iterable[tuple],
                    batch_size: int, report: PopulationReport) -> None:
    columns = list(columns)
    statement = (
        f"INSERT INTO {table}({', '.join(columns)}) "
        f"VALUES ({', '.join('?' * len(columns))})"
    )
    batch = []
    report.add(table, 0, 0)

    def flush():
        con.executemany(statement, batch)
        report.add(table, len(batch))
        batch.clear()

    for row in rows:
        batch.append(row)
        if len(batch) >= batch_size:
            flush()
    if batch:
        flush()


def _create_all(con, schema: SchemaGraph) -> None:
    for table in schema:
        con.execute(ddl_for(table, if_not_exists=True))


def populate_persons(db, archive, only_linked: bool = False,
                     batch_size: int = DEFAULT_BATCH_SIZE) -> PopulationReport:
    """Load persons and their detail tables from an ORCID-style archive.

    With ``only_linked``, only persons whose ORCID appears in
    ``work_authors`` are loaded.  Person identifiers are archive ordinals,
    so they do not depend on the filter.
    """
    report = PopulationReport()
    con = _connect(db)
    try:
        linked = None
        if only_linked:
            if not table_exists(con, "work_authors"):
                raise PreconditionError("only_linked requires a populated work_authors table")
            columns = {r[1] for r in con.execute("PRAGMA table_info(work_authors)")}
            if "orcid" not in columns:
                raise PreconditionError("only_linked requires work_authors.orcid")
            linked = {r[0] for r in con.execute(
                "SELECT DISTINCT orcid FROM work_authors WHERE orcid IS NOT NULL")}
        stream = read_person_archive(archive)
        persons, details = [], {t: [] for t in ORCID.table_names if t != "persons"}
        for ordinal, person in enumerate(stream):
            if linked is not None and person.orcid not in linked:
                continue
            persons.append((ordinal, person.orcid, person.given_names, person.family_name))
            for kind, entries in (("person_employments", person.employments),
                                  ("person_educations", person.educations)):
                details[kind].extend(
                    (ordinal, a.organization_name, a.ror, a.start_year, a.end_year)
                    for a in entries
                )
            details["person_works"].extend((ordinal, d) for d in person.works)
            details["person_keywords"].extend((ordinal, k) for k in person.keywords)
        with con:
            _create_all(con, ORCID)
            _insert_batches(con, "persons", ORCID.table("persons").column_names, persons,
                            batch_size, report)
            for name, rows in details.items():
                _insert_batches(con, name, ORCID.table(name).column_names, rows,
                                batch_size, report)
        report.warnings = stream.warnings
    finally:
        con.close()
    return report


def populate_reference_tables(db, *, ror=None, journals=None, funders=None, doaj=None,
                              asjc=None, batch_size: int = DEFAULT_BATCH_SIZE) -> PopulationReport:
    """Load the unsliced reference data sets; each path is optional."""
    report = PopulationReport()
    con = _connect(db)
    try:
        with con:
            if ror is not None:
                _create_all(con, ROR)
                stream = read_org_registry(ror)
                orgs = list(stream)
                report.warnings += stream.warnings
                _insert_batches(con, "research_organizations",
                                ROR.table("research_organizations").column_names,
                                ((i, o.ror, o.name, o.country) for i, o in enumerate(orgs)),
                                batch_size, report)
                _insert_batches(con, "org_acronyms", ("org_id", "acronym"),
                                ((i, a) for i, o in enumerate(orgs) for a in o.acronyms),
                                batch_size, report)
                _insert_batches(con, "org_aliases", ("org_id", "alias"),
                                ((i, a) for i, o in enumerate(orgs) for a in o.aliases),
                                batch_size, report)
                _insert_batches(con, "org_relationships", ("org_id", "type", "ror_path"),
                                ((i, "Parent", o.parent) for i, o in enumerate(orgs) if o.parent),
                                batch_size, report)
            flat = {"journal_names": journals, "funder_names": funders,
                    "open_access_journals": doaj, "asjc_codes": asjc}
            for name, path in flat.items():
                if path is None:
                    continue
                table = FLAT.table(name)
                con.execute(ddl_for(table, if_not_exists=True))
                stream = read_csv_table(path, table)
                rows = list(stream)
                report.warnings += stream.warnings
                columns = csv_columns(table)
                if table.has_column("id"):
                    rows = [(i,) + row for i, row in enumerate(rows)]
                    columns = ["id"] + columns
                _insert_batches(con, name, columns, rows, batch_size, report)
                if name == "journal_names":
                    con.execute(ddl_for(FLAT.table("journal_issns"), if_not_exists=True))
                    issns = [r for row in rows
                              for r in journal_issn_rows(row[0], *row[2:5])]
                    _insert_batches(con, "journal_issns", ("journal_id", "issn", "issn_type"),
                                    issns, batch_size, report)
    finally:
        con.close()
    return report
