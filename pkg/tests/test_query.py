import csv
from collections import Counter

import apsw
import pytest

from corpusdb.errors import ScriptError, UsageError
from corpusdb.query import (
    PartitionedAggregateWarning, aggregates_across_containers, query, query_to_csv,
    run_script_set,
)

from oracles import CONTAINMENT, SINGLE_TABLE


def populated(full_db, sql):
    con = apsw.Connection(str(full_db))
    try:
        return Counter(con.execute(sql).fetchall())
    finally:
        con.close()


@pytest.mark.parametrize("sql", SINGLE_TABLE)
def test_single_table_equivalence(sql, source, full_db):
    assert Counter(query(source, sql)) == populated(full_db, sql)


@pytest.mark.parametrize("sql", CONTAINMENT)
def test_containment_join_equivalence(sql, source, full_db):
    assert Counter(query(source, sql, partition=True)) == populated(full_db, sql)


def test_count_over_fixture(source):
    assert list(query(source, "SELECT Count(*) FROM works")) == [(1000,)]


def test_orcid_works(source, dataset):
    from corpusdb.synthetic import make_works
    works = make_works(10, 100, 0)
    expected = Counter(w.doi for c in works for w in c for a in w.authors if a.orcid)
    sql = ("SELECT w.doi FROM works w JOIN work_authors a ON a.work_id = w.id "
           "WHERE a.orcid IS NOT NULL")
    assert Counter(r[0] for r in query(source, sql, partition=True)) == expected


def test_cross_container_join_undercounts(source, full_db):
    sql = ("SELECT Count(*) FROM works w JOIN work_references r ON r.work_id = w.id "
           "JOIN works cited ON cited.doi = r.doi")
    truth = populated(full_db, sql)
    with pytest.warns(PartitionedAggregateWarning):
        per_container = [n for (n,) in query(source, sql, partition=True)]
    (total,), = truth
    assert len(per_container) == 10
    assert 0 < sum(per_container) < total


def test_join_requires_partition(source):
    with pytest.raises(UsageError, match="partition"):
        query(source, "SELECT w.doi FROM works w JOIN work_authors a ON a.work_id = w.id")


def test_multi_table_requires_partition(source):
    with pytest.raises(UsageError):
        query(source, "SELECT doi FROM works WHERE id IN (SELECT work_id FROM work_links)")


@pytest.mark.parametrize("sql, flagged", [
    ("SELECT Count(*) FROM works", True),
    ("SELECT published_year, Count(*) FROM works GROUP BY published_year", True),
    ("SELECT container_id, Count(*) FROM works GROUP BY container_id", False),
    ("SELECT doi FROM works WHERE id IN (SELECT Max(id) FROM works)", False),
    ("SELECT doi FROM works WHERE title = 'Count(x)'", False),
])
def test_aggregate_check(sql, flagged):
    assert aggregates_across_containers(sql) is flagged


def test_partition_order_is_container_order(source):
    rows = list(query(source, "SELECT w.container_id FROM works w JOIN work_links l "
                              "ON l.work_id = w.id", partition=True))
    ids = [r[0] for r in rows]
    assert ids == sorted(ids)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_csv_count(source, tmp_path):
    out = tmp_path / "c.csv"
    assert query_to_csv(source, "SELECT Count(*) AS n FROM works", False, out) == 1
    assert read_csv(out) == [["n"], ["1000"]]


def test_csv_empty_result_has_header(source, tmp_path):
    out = tmp_path / "e.csv"
    assert query_to_csv(source, "SELECT doi, title FROM works WHERE 0", False, out) == 0
    assert read_csv(out) == [["doi", "title"]]


def test_csv_thousand_rows(source, tmp_path):
    out = tmp_path / "t.csv"
    assert query_to_csv(source, "SELECT doi, title FROM works", False, out) == 1000
    rows = read_csv(out)
    assert len(rows) == 1001 and rows[0] == ["doi", "title"]


def test_csv_quotes_fields(source, tmp_path):
    out = tmp_path / "q.csv"
    query_to_csv(source, "SELECT 'a,b' AS x, 'say \"hi\"' AS y FROM works LIMIT 1", False, out)
    assert (out.read_text().splitlines()[1]) == '"a,b","say ""hi"""'


def test_csv_unwritable(source, tmp_path):
    with pytest.raises(OSError):
        query_to_csv(source, "SELECT doi FROM works", False, tmp_path / "no" / "x.csv")


def test_scripts_run_in_order(tmp_path):
    db = tmp_path / "s.db"
    (tmp_path / "create-table.sql").write_text("CREATE TABLE t(x); INSERT INTO t VALUES (1), (2);")
    (tmp_path / "report.sql").write_text("CREATE TABLE r AS SELECT Sum(x) AS s FROM t;")
    log = run_script_set(db, [tmp_path / "create-table.sql", tmp_path / "report.sql"])
    assert [e.statements for e in log] == [2, 1]
    con = apsw.Connection(str(db))
    assert con.execute("SELECT s FROM r").fetchall() == [(3,)]


def test_failing_script_keeps_earlier_files(tmp_path):
    db = tmp_path / "s.db"
    (tmp_path / "1.sql").write_text("CREATE TABLE t(x);")
    (tmp_path / "2.sql").write_text("INSERT INTO t VALUES (1);\nSELECT nope FROM t;")
    with pytest.raises(ScriptError) as info:
        run_script_set(db, [tmp_path / "1.sql", tmp_path / "2.sql"])
    err = info.value
    assert err.path.endswith("2.sql") and err.statement_index == 2
    assert [e.path for e in err.log] == [str(tmp_path / "1.sql")]
    con = apsw.Connection(str(db))
    # the failing file is rolled back as a whole
    assert con.execute("SELECT Count(*) FROM t").fetchall() == [(0,)]


def test_empty_script_list(tmp_path):
    assert run_script_set(tmp_path / "s.db", []) == []


def test_bundled_scripts(full_db, tmp_path):
    import shutil
    from corpusdb.scripts import bundled_scripts, resolve_script
    db = tmp_path / "copy.db"
    shutil.copy(full_db, db)
    names = bundled_scripts()
    assert names == ["field-evolution", "relative-productivity", "yearly-evolution"]
    run_script_set(db, [resolve_script(f"bundled:{n}") for n in names])
    con = apsw.Connection(str(db))
    works = con.execute("SELECT Sum(works) FROM yearly_evolution").fetchone()[0]
    assert works == con.execute(
        "SELECT Count(*) FROM works WHERE published_year IS NOT NULL").fetchone()[0]
    general = {r[0] for r in con.execute("SELECT general_code FROM field_evolution")}
    assert general and all(code % 100 == 0 for code in general)
    assert 1500 in general
