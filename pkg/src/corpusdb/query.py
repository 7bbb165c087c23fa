"""SQL over unpopulated container sets, and a sequential script runner.

A query touching a single table scans the virtual table container after
container.  A partitioned query is traced to find the tables and columns
it reads; then, for every container, those columns are copied into
in-memory tables and the query is run again.  Partitioned results are the
concatenation of per-container results in container order, so joins are
only complete when they stay within a container and aggregates are
per-container.
"""

from __future__ import annotations

import csv
import logging
import re
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import apsw

from .container_tables import ContainerTables
from .errors import ScriptError, UsageError
from .schema import CROSSREF, SchemaGraph, trace_query
from .sources import ContainerSet

log = logging.getLogger(__name__)


class PartitionedAggregateWarning(UserWarning):
    """An aggregate in a partitioned query is computed per container."""


_AGGREGATE = re.compile(r"\b(count|sum|avg|min|max|total|group_concat)\s*\(\)", re.I)
_GROUP_BY = re.compile(r"\bgroup\s+by\b(.*)", re.I | re.S)


def _top_level(sql: str) -> str:
    """Drop string literals and everything nested inside parentheses."""
    sql = re.sub(r"'(?:[^']|'')*'", "''", sql)
    out, depth = [], 0
    for ch in sql:
        if ch == "(":
            if depth == 0:
                out.append(ch)
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                out.append(ch)
        elif depth == 0:
            out.append(ch)
    return "".join(out)


def aggregates_across_containers(sql: str) -> bool:
    """True when the outermost query aggregates without grouping by container."""
    text = _top_level(sql)
    group = _GROUP_BY.search(text)
    if group:
        return "container_id" not in group.group(1).lower()
    return bool(_AGGREGATE.search(text))


class _Session:
    def __init__(self, source: ContainerSet, schema: SchemaGraph, attach, cache_size):
        self.tables = ContainerTables(source, schema, cache_size)
        self.con = apsw.Connection(":memory:")
        for name, path in (attach or {}).items():
            self.con.execute(f"ATTACH DATABASE ? AS {name}", (str(path),))


def query(source: ContainerSet, sql: str, partition: bool = False, *,
          schema: SchemaGraph = CROSSREF, attach: Mapping[str, str] | None = None,
          cache_size: int | None = None, description: list | None = None) -> Iterator[tuple]:
    """Run ``sql`` over ``source`` and yield result rows.

    If ``description`` is a list, the result column names are appended
    to it before the first row is produced.
    """
    if not partition and re.search(r"\bjoin\b", _top_level(sql), re.I):
        raise UsageError("queries joining tables require partitioned mode")
    trace = trace_query(sql, schema, attach)
    if not partition and len(trace.tables) > 1:
        raise UsageError(
            f"query reads {len(trace.tables)} tables; use partitioned mode"
        )
    if partition and aggregates_across_containers(sql):
        warnings.warn(
            "aggregates in a partitioned query are evaluated per container",
            PartitionedAggregateWarning,
            stacklevel=2,
        )
    session = _Session(source, schema, attach, cache_size)
    if partition:
        return _partitioned(session, sql, trace, schema, description)
    session.tables.attach(session.con, "main")
    return _execute(session.con, sql, description)


def _execute(con, sql, description=None):
    cursor = con.cursor()
    if description is not None:
        def tracer(cur, statement, bindings):
            if not description:
                description.extend(d[0] for d in cur.get_description())
            return True
        cursor.exec_trace = tracer
    yield from cursor.execute(sql)


def _partitioned(session: _Session, sql, trace, schema, description):
    con = session.con
    session.tables.attach(con, "container")
    for index, _ in session.tables.source.containers:
        for name in sorted(trace.tables):
            table = schema.table(name)
            wanted = {c for t, c in trace.columns if t == name}
            columns = [c for c in table.column_names if c in wanted] or [table.container_id_column]
            con.execute(
                f"CREATE TABLE main.{name} AS SELECT {', '.join(columns)} "
                f"FROM container.{name} WHERE container_id = {index}"
            )
        try:
            yield from _execute(con, sql, description)
        finally:
            for name in trace.tables:
                con.execute(f"DROP TABLE main.{name}")


def query_to_csv(source: ContainerSet, sql: str, partition: bool, out, **kwargs) -> int:
    """Write the query result with a header row to ``out``; return the data row count."""
    description: list[str] = []
    rows = query(source, sql, partition, description=description, **kwargs)
    count = 0
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        buffered = next(rows, None)
        if not description:
            description.extend(_describe(sql, kwargs.get("schema", CROSSREF),
                                         kwargs.get("attach")))
        writer.writerow(description)
        if buffered is not None:
            writer.writerow(buffered)
            count = 1
        for row in rows:
            writer.writerow(row)
            count += 1
    return count


def _describe(sql, schema, attach):
    """Column names of ``sql`` obtained from empty shadow tables."""
    from .schema import _shadow_connection
    con = _shadow_connection(schema, attach)
    try:
        names: list[str] = []
        for _ in _execute(con, sql, names):
            pass
        return names
    finally:
        con.close()


@dataclass
class ScriptLogEntry:
    path: str
    statements: int
    rows_returned: int
    rows_changed: int
    seconds: float


def split_statements(text: str) -> list[str]:
    """Split SQL text into complete statements."""
    statements, pending = [], ""
    for piece in text.split(";"):
        pending += piece + ";"
        if apsw.complete(pending):
            if pending.strip(" \t\r\n;"):
                statements.append(pending.strip())
            pending = ""
    if pending.strip(" \t\r\n;"):
        statements.append(pending.strip().rstrip(";"))
    return statements


def run_script_set(db, scripts) -> list[ScriptLogEntry]:
    """Execute SQL files in order, one transaction per file.

    The first failing statement aborts the run with a :class:`ScriptError`
    naming the file and statement; earlier files stay committed.
    """
    con = apsw.Connection(str(db))
    entries: list[ScriptLogEntry] = []
    try:
        for path in scripts:
            statements = split_statements(Path(path).read_text(encoding="utf-8"))
            started = time.perf_counter()
            changes_before = con.total_changes()
            returned = 0
            position = 0
            try:
                with con:
                    for position, statement in enumerate(statements, start=1):
                        for _ in con.execute(statement):
                            returned += 1
            except apsw.Error as e:
                raise ScriptError(path, position, statements[position - 1], str(e),
                                  entries) from e
            entries.append(ScriptLogEntry(
                str(path), len(statements), returned,
                con.total_changes() - changes_before,
                time.perf_counter() - started,
            ))
            log.info("%s: %d statements, %.3fs", path, len(statements), entries[-1].seconds)
    finally:
        con.close()
    return entries
