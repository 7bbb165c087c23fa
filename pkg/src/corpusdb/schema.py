"""Relational schema of the supported data sources.

Tables are described by :class:`TableSchema` objects grouped into a
:class:`SchemaGraph`.  The graph drives DDL generation, the resolution of
vertical/horizontal slicing requests, the order in which tables are joined
and populated, and the tracing of the columns a query reads.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import apsw

from .errors import CycleError, DomainError, ResolutionError, SchemaError

KINDS = ("key", "foreign_key", "text", "integer", "real", "date-part")

_SQL_TYPES = {
    "key": "INTEGER",
    "foreign_key": "INTEGER",
    "text": "TEXT",
    "integer": "INTEGER",
    "real": "REAL",
    "date-part": "INTEGER",
}

_IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _check_identifier(name: str) -> None:
    if not isinstance(name, str) or not _IDENTIFIER.match(name):
        raise SchemaError(f"invalid identifier: {name!r}")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    semantic_kind: str = "text"
    nullable: bool = True
    # "table.column" target of a foreign_key column
    references: str | None = None

    def __post_init__(self):
        _check_identifier(self.name)
        if self.semantic_kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.semantic_kind!r}")
        if self.semantic_kind == "foreign_key":
            if not self.references or self.references.count(".") != 1:
                raise SchemaError(
                    f"{self.name}: foreign key must name one table.column target"
                )
        elif self.references is not None:
            raise SchemaError(f"{self.name}: only foreign keys carry a target")

    @property
    def target_table(self) -> str | None:
        return self.references.split(".")[0] if self.references else None


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSchema, ...]
    parent: str | None = None
    container_id_column: str | None = None

    def __post_init__(self):
        _check_identifier(self.name)
        object.__setattr__(self, "columns", tuple(self.columns))
        if not self.columns:
            raise SchemaError(f"table {self.name} has no columns")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"table {self.name} has duplicate column names")
        if self.container_id_column and self.container_id_column not in names:
            raise SchemaError(
                f"table {self.name} lacks container column {self.container_id_column}"
            )
        if self.parent is not None and self.parent_link is None:
            raise SchemaError(
                f"table {self.name} has no foreign key to its parent {self.parent}"
            )

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnSchema:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def has_column(self, name: str) -> bool:
        return name in self.column_names

    @property
    def key(self) -> str | None:
        for c in self.columns:
            if c.semantic_kind == "key":
                return c.name
        return None

    @property
    def parent_link(self) -> ColumnSchema | None:
        """The foreign key column joining this table to its parent."""
        for c in self.columns:
            if c.semantic_kind == "foreign_key" and c.target_table == self.parent:
                return c
        return None

    @property
    def structural_columns(self) -> tuple[str, ...]:
        """Keys, foreign keys and the container column, in schema order."""
        return tuple(
            c.name
            for c in self.columns
            if c.semantic_kind in ("key", "foreign_key")
            or c.name == self.container_id_column
        )

    def restricted(self, names: Iterable[str]) -> "TableSchema":
        """Return a copy holding only the named columns (schema order kept)."""
        wanted = set(names)
        unknown = wanted - set(self.column_names)
        if unknown:
            raise ResolutionError(f"{self.name}: unknown columns {sorted(unknown)}")
        columns = tuple(c for c in self.columns if c.name in wanted)
        parent = self.parent
        if parent is not None and not any(
            c.semantic_kind == "foreign_key" and c.target_table == parent
            for c in columns
        ):
            parent = None
        container = (
            self.container_id_column
            if self.container_id_column in wanted
            else None
        )
        return replace(
            self, columns=columns, parent=parent, container_id_column=container
        )


class SchemaGraph:
    """A set of tables linked by containment and foreign-key edges.

    Instances are immutable once constructed.
    """

    def __init__(self, tables: Iterable[TableSchema]):
        self._tables: dict[str, TableSchema] = {}
        for t in tables:
            if t.name in self._tables:
                raise SchemaError(f"duplicate table {t.name}")
            self._tables[t.name] = t
        for t in self._tables.values():
            if t.parent is not None and t.parent not in self._tables:
                raise SchemaError(f"{t.name}: unknown parent {t.parent}")
            for c in t.columns:
                if c.semantic_kind != "foreign_key":
                    continue
                target, column = c.references.split(".")
                if target in self._tables and not self._tables[target].has_column(column):
                    raise SchemaError(f"{t.name}.{c.name}: unknown target {c.references}")
        # Containment must form a forest
        for name in self._tables:
            seen = [name]
            current = self._tables[name].parent
            while current is not None:
                if current in seen:
                    raise CycleError(seen[seen.index(current):] + [current])
                seen.append(current)
                current = self._tables[current].parent

    def __contains__(self, name) -> bool:
        return name in self._tables

    def __iter__(self):
        return iter(self._tables.values())

    def __len__(self) -> int:
        return len(self._tables)

    @property
    def table_names(self) -> tuple[str, ...]:
        return tuple(self._tables)

    def table(self, name: str) -> TableSchema:
        try:
            return self._tables[name]
        except KeyError:
            raise ResolutionError(f"unknown table {name}") from None

    def ancestors(self, name: str) -> list[str]:
        """Parents of ``name`` from the nearest up to the root."""
        result = []
        current = self.table(name).parent
        while current is not None:
            result.append(current)
            current = self._tables[current].parent
        return result

    def root(self, name: str) -> str:
        chain = self.ancestors(name)
        return chain[-1] if chain else name

    def children(self, name: str) -> list[str]:
        return sorted(t.name for t in self._tables.values() if t.parent == name)

    @property
    def edges(self) -> list[tuple[str, str]]:
        """(referenced, referencing) pairs for containment and foreign keys."""
        result = set()
        for t in self._tables.values():
            if t.parent is not None:
                result.add((t.parent, t.name))
            for c in t.columns:
                target = c.target_table
                if target is not None and target in self._tables and target != t.name:
                    result.add((target, t.name))
        return sorted(result)


@dataclass(frozen=True)
class Sampling:
    probability: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise DomainError(f"sampling probability {self.probability} not in [0, 1]")


@dataclass(frozen=True)
class SliceSpec:
    """What to populate: a column selection, a row filter, and container sampling.

    An empty ``columns`` selection means every column of every table.
    """

    columns: frozenset[str] = frozenset()
    row_expression: str | None = None
    sampling: Sampling | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", frozenset(self.columns))
        if self.row_expression is not None and not self.row_expression.strip():
            object.__setattr__(self, "row_expression", None)


@dataclass(frozen=True)
class ResolvedSlice:
    # Populated tables in topological order and their columns in schema order
    tables: tuple[str, ...]
    columns: Mapping[str, tuple[str, ...]]
    # Tables joined to evaluate the row expression, topologically ordered
    expression_tables: tuple[str, ...] = ()
    expression_columns: frozenset[tuple[str, str]] = frozenset()

    @property
    def pairs(self) -> frozenset[tuple[str, str]]:
        return frozenset((t, c) for t, cols in self.columns.items() for c in cols)


def ddl_for(table: TableSchema, *, qualifier: str | None = None,
            if_not_exists: bool = False) -> str:
    """Return the CREATE TABLE statement for ``table``."""
    lines = []
    for c in table.columns:
        line = f"  {c.name} {_SQL_TYPES[c.semantic_kind]}"
        if c.semantic_kind == "key":
            line += " PRIMARY KEY"
        elif not c.nullable:
            line += " NOT NULL"
        lines.append(line)
    name = f"{qualifier}.{table.name}" if qualifier else table.name
    guard = "IF NOT EXISTS " if if_not_exists else ""
    return f"CREATE TABLE {guard}{name}(\n" + ",\n".join(lines) + "\n);\n"


def topological_order(tables: Iterable[str], graph: SchemaGraph) -> list[str]:
    """Order ``tables`` so that referenced tables precede referencing ones.

    Kahn's algorithm over the edges among the requested tables; ready
    tables are taken in name order so the result is deterministic.
    """
    wanted = set(tables)
    for name in wanted:
        graph.table(name)
    incoming = {name: 0 for name in wanted}
    successors: dict[str, list[str]] = {name: [] for name in wanted}
    for src, dst in graph.edges:
        if src in wanted and dst in wanted:
            successors[src].append(dst)
            incoming[dst] += 1
    ready = [name for name, n in incoming.items() if n == 0]
    heapq.heapify(ready)
    result = []
    while ready:
        current = heapq.heappop(ready)
        result.append(current)
        for child in successors[current]:
            incoming[child] -= 1
            if incoming[child] == 0:
                heapq.heappush(ready, child)
    if len(result) != len(wanted):
        raise CycleError(_find_cycle({n for n in wanted if incoming[n] > 0}, successors))
    return result


def _find_cycle(remaining: set[str], successors: dict[str, list[str]]) -> list[str]:
    start = min(remaining)
    path = [start]
    while True:
        nxt = min(s for s in successors[path[-1]] if s in remaining)
        if nxt in path:
            return path[path.index(nxt):] + [nxt]
        path.append(nxt)


# Tracing ------------------------------------------------------------------


@dataclass(frozen=True)
class QueryTrace:
    tables: frozenset[str]
    columns: frozenset[tuple[str, str]]


def _shadow_connection(schema: SchemaGraph, attach: Mapping[str, str] | None = None):
    con = apsw.Connection(":memory:")
    for table in schema:
        con.execute(ddl_for(table))
    for name, path in (attach or {}).items():
        _check_identifier(name)
        con.execute(f"ATTACH DATABASE ? AS {name}", (str(path),))
    return con


def _run_traced(con, schema: SchemaGraph, sql: str) -> QueryTrace:
    tables, columns = set(), set()

    def authorizer(op, table, column, database, _trigger):
        if op == apsw.SQLITE_READ and database in ("main", None) and table in schema:
            tables.add(table)
            if column:
                columns.add((table, column))
        return apsw.SQLITE_OK

    con.authorizer = authorizer
    try:
        for _ in con.execute(sql):
            pass
    except apsw.SQLError as e:
        if "no such" in str(e) or "ambiguous" in str(e):
            raise ResolutionError(str(e)) from e
        raise
    finally:
        con.authorizer = None
    return QueryTrace(frozenset(tables), frozenset(columns))


def trace_query(query: str, schema: SchemaGraph,
                attach: Mapping[str, str] | None = None) -> QueryTrace:
    """Run ``query`` over empty shadow tables, recording every table and column read."""
    con = _shadow_connection(schema, attach)
    try:
        return _run_traced(con, schema, query)
    finally:
        con.close()


def trace_required_columns(query: str, schema: SchemaGraph,
                           attach: Mapping[str, str] | None = None) -> set[tuple[str, str]]:
    return set(trace_query(query, schema, attach).columns)


_STRING_LITERAL = re.compile(r"'(?:[^']|'')*'")
_QUALIFIER = re.compile(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\.\s*(?=[A-Za-z_*\"])")


def expression_tables(expression: str, schema: SchemaGraph, root: str) -> list[str]:
    """Tables an expression refers to by qualified name, plus their ancestors."""
    text = _STRING_LITERAL.sub("''", expression)
    named = {m.group(1) for m in _QUALIFIER.finditer(text)} & set(schema.table_names)
    tables = {root}
    for name in named:
        if schema.root(name) != root:
            raise ResolutionError(
                f"expression table {name} is not contained in {root}"
            )
        tables.add(name)
        tables.update(schema.ancestors(name))
    return topological_order(tables, schema)


def resolve_slice(spec: SliceSpec, schema: SchemaGraph,
                  attach: Mapping[str, str] | None = None,
                  root: str = "works") -> ResolvedSlice:
    """Expand selectors and close them over keys and ancestors.

    The row expression is traced against shadow tables to find the
    columns it reads.  Child-table columns in the expression must be
    qualified with their table name.
    """
    selected: dict[str, set[str]] = {}
    selectors = spec.columns or {f"{t}.*" for t in schema.table_names}
    for selector in sorted(selectors):
        table_name, dot, column = selector.partition(".")
        if not dot or table_name not in schema:
            raise ResolutionError(f"unknown table in selector {selector!r}")
        table = schema.table(table_name)
        if column == "*":
            selected.setdefault(table_name, set()).update(table.column_names)
        elif table.has_column(column):
            selected.setdefault(table_name, set()).add(column)
        else:
            raise ResolutionError(f"unknown column in selector {selector!r}")

    for table_name in list(selected):
        for ancestor in schema.ancestors(table_name):
            selected.setdefault(ancestor, set())
    for table_name, cols in selected.items():
        cols.update(schema.table(table_name).structural_columns)

    order = topological_order(selected, schema)
    columns = {
        t: tuple(c for c in schema.table(t).column_names if c in selected[t])
        for t in order
    }

    if spec.row_expression is None:
        return ResolvedSlice(tuple(order), columns)

    joined = expression_tables(spec.row_expression, schema, root)
    con = _shadow_connection(schema, attach)
    try:
        trace = _run_traced(
            con, schema,
            f"SELECT 1 FROM {', '.join(joined)} WHERE ({spec.row_expression})",
        )
    finally:
        con.close()
    return ResolvedSlice(tuple(order), columns, tuple(joined), trace.columns)


# Bundled schemas ------------------------------------------------------------


def _key(name="id"):
    return ColumnSchema(name, "key", nullable=False)


def _fk(name, target):
    return ColumnSchema(name, "foreign_key", nullable=False, references=target)


def _text(name, nullable=True):
    return ColumnSchema(name, "text", nullable)


def _int(name, kind="integer"):
    return ColumnSchema(name, kind)


_CONTAINER = ColumnSchema("container_id", "integer", nullable=False)


def _crossref_table(name, parent, *columns):
    return TableSchema(name, (columns[0], _CONTAINER) + columns[1:], parent, "container_id")


CROSSREF_TABLES = (
    _crossref_table(
        "works", None,
        _key(),
        _text("doi", nullable=False),
        _text("title"),
        _int("published_year", "date-part"),
        _int("published_month", "date-part"),
        _int("published_day", "date-part"),
        _text("container_title"),
        _text("issn_print"),
        _text("issn_electronic"),
        _text("page"),
        _text("abstract"),
    ),
    _crossref_table(
        "work_authors", "works",
        _key(), _fk("work_id", "works.id"),
        _text("orcid"), _text("given"), _text("family"),
    ),
    _crossref_table(
        "author_affiliations", "work_authors",
        _key(), _fk("author_id", "work_authors.id"), _text("name"),
    ),
    _crossref_table(
        "work_references", "works",
        _fk("work_id", "works.id"),
        _text("doi"), _text("unstructured"), _int("year"),
    ),
    _crossref_table(
        "work_funders", "works",
        _key(), _fk("work_id", "works.id"), _text("doi"), _text("name"),
    ),
    _crossref_table(
        "funder_awards", "work_funders",
        _fk("funder_id", "work_funders.id"), _text("name"),
    ),
    _crossref_table(
        "work_subjects", "works", _fk("work_id", "works.id"), _text("name"),
    ),
    _crossref_table(
        "work_links", "works", _fk("work_id", "works.id"), _text("url"),
    ),
)

ORCID_TABLES = (
    TableSchema("persons", (
        _key(), _text("orcid", nullable=False), _text("given_names"), _text("family_name"),
    )),
) + tuple(
    TableSchema(name, (
        _fk("person_id", "persons.id"),
        _text("organization_name"), _text("ror"),
        _int("start_year", "date-part"), _int("end_year", "date-part"),
    ), "persons")
    for name in ("person_employments", "person_educations")
) + (
    TableSchema("person_works", (_fk("person_id", "persons.id"), _text("doi")), "persons"),
    TableSchema("person_keywords", (_fk("person_id", "persons.id"), _text("keyword")), "persons"),
)

ROR_TABLES = (
    TableSchema("research_organizations", (
        _key(), _text("ror_path", nullable=False), _text("name"), _text("country_code"),
    )),
    TableSchema("org_acronyms", (
        _fk("org_id", "research_organizations.id"), _text("acronym"),
    ), "research_organizations"),
    TableSchema("org_aliases", (
        _fk("org_id", "research_organizations.id"), _text("alias"),
    ), "research_organizations"),
    TableSchema("org_relationships", (
        _fk("org_id", "research_organizations.id"), _text("type"), _text("ror_path"),
    ), "research_organizations"),
)

FLAT_TABLES = (
    TableSchema("journal_names", (
        _key(), _text("title"), _text("issn_print"), _text("issn_electronic"),
        _text("issn_additional"),
    )),
    TableSchema("journal_issns", (
        _fk("journal_id", "journal_names.id"), _text("issn"), _text("issn_type"),
    ), "journal_names"),
    TableSchema("funder_names", (_key(), _text("uri"), _text("name"))),
    TableSchema("open_access_journals", (
        _key(), _text("title"), _text("issn_print"), _text("issn_electronic"),
        _text("publisher"), _text("license"),
    )),
    TableSchema("asjc_codes", (_key("code"), _text("description"))),
)

LINK_TABLES = (
    TableSchema("affiliations_rors", (
        _fk("affiliation_id", "author_affiliations.id"),
        _fk("ror_id", "research_organizations.id"),
    )),
)

CROSSREF = SchemaGraph(CROSSREF_TABLES)
ORCID = SchemaGraph(ORCID_TABLES)
ROR = SchemaGraph(ROR_TABLES)
FLAT = SchemaGraph(FLAT_TABLES)
BUNDLED = SchemaGraph(CROSSREF_TABLES + ORCID_TABLES + ROR_TABLES + FLAT_TABLES + LINK_TABLES)
