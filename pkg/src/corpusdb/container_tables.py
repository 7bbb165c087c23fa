"""Container sets exposed as SQLite virtual tables.

Each table of the container schema becomes a virtual table whose rows are
produced from the cached, parsed container.  Row identifiers are
``container_index << 32 | ordinal``, unique across a container set and
stable under filtering and sampling.  The virtual tables honour equality
constraints on ``container_id`` and range constraints on ``rowid`` so that
per-container and per-batch statements touch a single parsed container.
"""

from __future__ import annotations

import itertools

import apsw

from .schema import CROSSREF, SchemaGraph
from .sources import ContainerCache, ContainerSet, WorkRecord, load_container_items, parse_work

ORDINAL_BITS = 32
_EQ = apsw.SQLITE_INDEX_CONSTRAINT_EQ
_RANGE_OPS = {
    apsw.SQLITE_INDEX_CONSTRAINT_GE: "ge",
    apsw.SQLITE_INDEX_CONSTRAINT_GT: "gt",
    apsw.SQLITE_INDEX_CONSTRAINT_LE: "le",
    apsw.SQLITE_INDEX_CONSTRAINT_LT: "lt",
}


def row_id(container: int, ordinal: int) -> int:
    return (container << ORDINAL_BITS) | ordinal


def work_rows(index: int, works: list[WorkRecord]) -> dict[str, list[tuple]]:
    """Flatten a container's works into rows of the container schema.

    Tuples follow each table's column order in :data:`schema.CROSSREF`.
    """
    rows = {t: [] for t in CROSSREF.table_names}
    ids = {t: itertools.count() for t in ("works", "work_authors", "author_affiliations",
                                          "work_funders")}

    def new_id(table):
        return row_id(index, next(ids[table]))

    for w in works:
        work_id = new_id("works")
        rows["works"].append((
            work_id, index, w.doi, w.title, w.published_year, w.published_month,
            w.published_day, w.container_title, w.issn("print"), w.issn("electronic"),
            w.pages, w.abstract,
        ))
        for a in w.authors:
            author_id = new_id("work_authors")
            rows["work_authors"].append((author_id, index, work_id, a.orcid, a.given, a.family))
            for name in a.affiliations:
                rows["author_affiliations"].append(
                    (new_id("author_affiliations"), index, author_id, name)
                )
        for r in w.references:
            rows["work_references"].append((work_id, index, r.doi, r.unstructured, r.year))
        for f in w.funders:
            funder_id = new_id("work_funders")
            rows["work_funders"].append((funder_id, index, work_id, f.doi, f.name))
            for award in f.awards:
                rows["funder_awards"].append((funder_id, index, award))
        for s in w.subjects:
            rows["work_subjects"].append((work_id, index, s))
        for url in w.links:
            rows["work_links"].append((work_id, index, url))
    return rows


class ContainerTables:
    """Serves the rows of a container set to SQLite.

    Parsed containers are kept in a :class:`ContainerCache`, so populating
    several tables from the same container decodes it once.
    """

    module_name = "container_table"

    def __init__(self, source: ContainerSet, schema: SchemaGraph = CROSSREF,
                 cache_size: int | None = None):
        self.source = source
        self.schema = schema
        self.warnings = 0
        self._paths = dict(source.containers)
        self.cache = ContainerCache(self._load, cache_size)

    def _load(self, index):
        items = load_container_items(self._paths[index])
        works = []
        for item in items:
            work = parse_work(item, self)
            if work is not None:
                works.append(work)
        return work_rows(index, works)

    def warn(self, *_args):
        self.warnings += 1

    def rows(self, index: int, table: str) -> list[tuple]:
        return self.cache.get(index)[table]

    def row_count(self, index: int, table: str) -> int:
        return len(self.rows(index, table))

    def register(self, connection: apsw.Connection) -> None:
        connection.create_module(self.module_name, _Module(self))

    def attach(self, connection: apsw.Connection, database: str = "crossref") -> None:
        """Create the virtual tables in a fresh in-memory database ``database``."""
        self.register(connection)
        if database not in ("main", "temp"):
            connection.execute(f"ATTACH DATABASE ':memory:' AS {database}")
        for table in self.schema:
            connection.execute(
                f"CREATE VIRTUAL TABLE {database}.{table.name} "
                f"USING {self.module_name}({table.name})"
            )


class _Module:
    def __init__(self, tables: ContainerTables):
        self.tables = tables

    def Create(self, connection, module_name, database, table_name, *args):
        schema_table = self.tables.schema.table(args[0])
        declaration = "CREATE TABLE x(" + ", ".join(schema_table.column_names) + ")"
        return declaration, _Table(self.tables, schema_table)

    Connect = Create


class _Table:
    def __init__(self, tables: ContainerTables, schema_table):
        self.tables = tables
        self.name = schema_table.name
        self.container_column = schema_table.column_names.index(
            schema_table.container_id_column
        )

    def BestIndex(self, constraints, orderbys):
        usage = []
        plan = []
        for column, op in constraints:
            if column == self.container_column and op == _EQ and "container" not in plan:
                plan.append("container")
            elif column == -1 and op in _RANGE_OPS:
                plan.append(_RANGE_OPS[op])
            else:
                usage.append(None)
                continue
            usage.append((len(plan) - 1, False))
        cost = 1e9
        if "container" in plan:
            cost = 1e4 if len(plan) == 1 else 1e3
        return usage, 0, ",".join(plan), False, cost

    def Open(self):
        return _Cursor(self)

    def Disconnect(self):
        pass

    Destroy = Disconnect


class _Cursor:
    def __init__(self, table: _Table):
        self.table = table
        self._rows = iter(())
        self._current = None

    def Filter(self, index_number, index_string, args):
        plan = index_string.split(",") if index_string else []
        container = None
        low, high = 0, 1 << 63
        for op, value in zip(plan, args):
            if not isinstance(value, int):
                # SQLite re-checks every constraint; scanning more is safe
                continue
            if op == "container":
                container = value
            elif op == "ge":
                low = max(low, value)
            elif op == "gt":
                low = max(low, value + 1)
            elif op == "le":
                high = min(high, value + 1)
            elif op == "lt":
                high = min(high, value)
        self._rows = self._generate(container, low, high)
        self._advance()

    def _generate(self, container, low, high):
        tables = self.table.tables
        if container is not None:
            indices = [container] if container in tables._paths else []
        else:
            indices = [i for i, _ in tables.source.containers]
        for index in indices:
            base = row_id(index, 0)
            end = row_id(index + 1, 0)
            if high <= base or low >= end:
                continue
            rows = tables.rows(index, self.table.name)
            first = max(0, low - base)
            last = min(len(rows), high - base)
            for ordinal in range(first, last):
                yield base + ordinal, rows[ordinal]

    def _advance(self):
        self._current = next(self._rows, None)

    def Eof(self):
        return self._current is None

    def Rowid(self):
        return self._current[0]

    def Column(self, number):
        if number == -1:
            return self._current[0]
        return self._current[1][number]

    def Next(self):
        self._advance()

    def Close(self):
        self._rows = iter(())
