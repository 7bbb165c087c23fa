"""Acceptance suite: one test per release criterion, each printing PASS or FAIL."""

import json
import math
import random
import subprocess
import sys
import time
from collections import Counter
from contextlib import contextmanager

import apsw
import pytest

from corpusdb.link import (
    automaton_from_db, build_automaton, match_affiliations, propagate_to_parent,
)
from corpusdb.metrics import (
    CitationGraph, cd_index, cd_index_all, classify_title, h_index, impact_factor,
    impact_factor_details, is_citable, page_count,
)
from corpusdb.populate import populate
from corpusdb.query import query
from corpusdb.schema import CROSSREF, SliceSpec, resolve_slice
from corpusdb.sources import ContainerSet, OrgRecord, enumerate_containers, sample_containers

from oracles import (
    CONTAINMENT, SINGLE_TABLE, cd_oracle, db_from_works, filtered_contents, h_index_oracle,
    matching_work_ids, naive_best_match, random_affiliations, random_dag, random_expression,
    random_registry, table_columns, table_contents, work,
)


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def report(name):
        started = time.perf_counter()
        outcome = "FAIL"
        try:
            yield
            outcome = "PASS"
        finally:
            with capsys.disabled():
                print(f"\n[{outcome}] {name} ({time.perf_counter() - started:.2f}s)")
    return report


def test_slicing_equivalence(criterion, full_db, source, tmp_path):
    with criterion("slicing equivalence: 25 random row expressions"):
        started = time.perf_counter()
        con = apsw.Connection(str(full_db))
        for seed in range(25):
            expr = random_expression(random.Random(1000 + seed))
            db = tmp_path / f"s{seed}.db"
            populate(db, source, SliceSpec(row_expression=expr.sql))
            expected = filtered_contents(full_db, matching_work_ids(con, expr))
            assert table_contents(db, list(expected)) == expected, expr.sql
        assert time.perf_counter() - started < 120


def test_vertical_slicing(criterion, source, tmp_path):
    with criterion("vertical slicing: 10 random column specs"):
        rng = random.Random(11)
        selectors = sorted([f"{t.name}.{c}" for t in CROSSREF for c in t.column_names]
                           + [f"{t.name}.*" for t in CROSSREF])
        for i in range(10):
            spec = SliceSpec(frozenset(rng.sample(selectors, rng.randint(1, 6))))
            db = tmp_path / f"v{i}.db"
            populate(db, source, spec)
            assert table_columns(db) == dict(resolve_slice(spec, CROSSREF).columns)


def test_deterministic_sampling(criterion):
    with criterion("deterministic sampling: p=0.5, seed=42, 10,000 containers"):
        containers = ContainerSet("/none", tuple((i, f"/none/{i}.json.gz")
                                                 for i in range(10_000)))
        runs = [sample_containers(containers, 0.5, 42).indices for _ in range(3)]
        assert runs[0] == runs[1] == runs[2]
        sigma = math.sqrt(10_000 * 0.25)
        assert abs(len(runs[0]) - 5_000) <= 3 * sigma


def test_direct_query_equivalence(criterion, source, full_db):
    with criterion("direct-query equivalence: 12 queries"):
        con = apsw.Connection(str(full_db))
        for sql in SINGLE_TABLE + CONTAINMENT:
            direct = Counter(query(source, sql, partition=sql in CONTAINMENT))
            assert direct == Counter(con.execute(sql).fetchall()), sql
        assert len(SINGLE_TABLE + CONTAINMENT) == 12


def graph_of(nodes, edges):
    ids = sorted(nodes)
    return CitationGraph.from_edges([f"10.1/{i:05d}" for i in ids],
                                    [nodes[i] for i in ids], edges)


def test_cd5_oracle(criterion):
    with criterion("CD5 oracle: 50 random DAGs, exact, workers 1/2/8"):
        started = time.perf_counter()
        rng = random.Random(2024)
        h = int(5 * 365.25)
        for _ in range(50):
            nodes, edges = random_dag(rng, rng.randint(2, 200), rng.randint(0, 1000))
            assert len(nodes) <= 200 and len(edges) <= 1000
            g = graph_of(nodes, edges)
            for focal in nodes:
                expected = cd_oracle(nodes, edges, focal, h)
                r = cd_index(g, focal)
                assert (r is None) == (expected is None)
                if r is not None:
                    assert (r.fraction, r.n) == expected
            results = [list(cd_index_all(g, workers=w)) for w in (1, 2, 8)]
            assert results[0] == results[1] == results[2]
        assert time.perf_counter() - started < 60


def test_cd5_boundaries(criterion):
    with criterion("CD5 boundary cases"):
        g = graph_of({0: 0, 1: 10, 2: 20, 3: 30}, {(1, 0), (2, 1), (3, 1)})
        assert cd_index(g, 1).cd == 1.0
        g = graph_of({0: 0, 1: 10, 2: 20, 3: 30, 4: 40},
                     {(1, 0), (2, 1), (3, 1), (3, 0), (4, 0)})
        r = cd_index(g, 1)
        assert r.cd == 0.0 and r.n == 3
        assert cd_index(graph_of({0: 0, 1: 10}, {(1, 0)}), 1) is None


def test_jif_fixture(criterion, tmp_path):
    with criterion("JIF fixture 3.0 and page citability"):
        issn = [("1111-1111", "print")]
        prior = [work("10.1/p0", 2019, issns=issn, pages="1-10"),
                 work("10.1/p1", 2020, issns=issn),
                 work("10.1/p2", 2020, issns=issn, pages="1-2")]
        citing = [work(f"10.1/c{i}", 2021, refs=[prior[i % 3].doi]) for i in range(6)]
        db = db_from_works(tmp_path, prior + citing)
        (row,) = impact_factor_details(db, 2021)
        # the short work's citations still count, only the denominator shrinks
        assert (row.citations, row.citable_items) == (6, 2)
        assert impact_factor(db, 2021) == [("1111-1111", 3.0)]
        assert not is_citable("1-2") and is_citable("1-4") and is_citable(None)


def test_h5_oracle(criterion):
    with criterion("h-index: 1,000 random count vectors"):
        rng = random.Random(5)
        for _ in range(1000):
            counts = [rng.randint(0, 50) for _ in range(rng.randint(0, 60))]
            assert h_index(counts) == h_index_oracle(counts)


def test_affiliation_matcher(criterion):
    with criterion("affiliation matcher: 200 orgs, 500 affiliations, acronym pruning"):
        rng = random.Random(200)
        registry = random_registry(rng, 200)
        automaton = build_automaton(registry)
        pattern_orgs = {p: automaton.org_of(p) for p in automaton.patterns}
        for text in random_affiliations(rng, registry, 500):
            ours = automaton.best_match(text)
            assert (ours and (ours[1], ours[0], ours[2])) == naive_best_match(text, pattern_orgs)
        pair = [OrgRecord("r1", "AI Corporation", ["AI"], []),
                OrgRecord("r2", "Ministry of Foreign Affairs", [], [])]
        for min_length in (2, 3):
            pruned = build_automaton(pair, min_length=min_length)
            assert "ai" in pruned.pruned
            assert pruned.best_match("Ministry of Foreign Affairs, Athens")[1] == "r2"


def test_parent_propagation(criterion, full_db, tmp_path):
    import shutil
    with criterion("parent propagation: hospital to university, idempotent"):
        db = tmp_path / "p.db"
        shutil.copy(full_db, db)
        match_affiliations(db, automaton_from_db(db))
        sql = ("SELECT o.name FROM affiliations_rors r JOIN author_affiliations af "
               "ON af.id = r.affiliation_id JOIN research_organizations o ON o.id = r.ror_id "
               "WHERE af.name = 'Athens University Hospital, Athens, Greece'")
        con = apsw.Connection(str(db))
        assert {r[0] for r in con.execute(sql)} == {"Athens University Hospital"}
        assert propagate_to_parent(db) > 0
        assert {r[0] for r in con.execute(sql)} == {"University of Athens"}
        snapshot = con.execute("SELECT * FROM affiliations_rors ORDER BY 1, 2").fetchall()
        assert propagate_to_parent(db) == 0
        assert con.execute("SELECT * FROM affiliations_rors ORDER BY 1, 2").fetchall() == snapshot


def test_page_parser(criterion):
    with criterion("page parser examples"):
        assert page_count("100-110") == 11
        assert page_count("234-2366") is None
        assert page_count("1744-8069-5-32") is None


MEMORY_PROBE = """
import json, resource, sys
from corpusdb.populate import populate
from corpusdb.sources import enumerate_containers
if len(sys.argv) > 1:
    populate(sys.argv[1], enumerate_containers(sys.argv[2]))
try:
    # ru_maxrss can carry over the forking parent's footprint; VmHWM starts fresh at exec
    with open("/proc/self/status") as f:
        peak = next(int(l.split()[1]) for l in f if l.startswith("VmHWM:"))
except OSError:
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
print(json.dumps(peak))
"""


def peak_rss_kb(*args):
    proc = subprocess.run([sys.executable, "-c", MEMORY_PROBE, *map(str, args)],
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.splitlines()[-1])


def test_memory_bound(criterion, tmp_path):
    from corpusdb.synthetic import write_container_set
    with criterion("memory bound: 100 containers under 4x one container"):
        many = tmp_path / "many"
        write_container_set(many, 100, 300, seed=1)
        one = tmp_path / "one"
        one.mkdir()
        first = enumerate_containers(many).path(0)
        (one / first.name).write_bytes(first.read_bytes())
        baseline = peak_rss_kb()
        single = peak_rss_kb(tmp_path / "one.db", one)
        hundred = peak_rss_kb(tmp_path / "many.db", many)
        print(f"peak RSS kB: imports only {baseline}, 1 container {single}, "
              f"100 containers {hundred}")
        assert hundred < 4 * single

TITLES = [
    ("A systematic review of X", "SLR"),
    ("Bibliometric analysis of Y", "BM"),
    ("On the design of widgets", "NONE"),
    ("Statins: a systematic review and meta-analysis", "SLR"),
    ("A meta-analysis within a systematic literature review", "SLR"),
    ("Systematic mapping study of code review", "SLR"),
    ("A meta-analysis of sleep studies", "MA"),
    ("Umbrella review and meta-analysis of diets", "MA"),
    ("An umbrella review of exercise", "TER/UR"),
    ("A tertiary study in software engineering", "TER/UR"),
    ("A mapping review of soft robotics", "MR"),
    ("Mapping review with a bibliometric lens", "MR"),
    ("Bibliometric and scientometric perspectives", "BM"),
    ("A scientometric portrait of catalysis", "SM"),
    ("Scientometric literature review of tourism", "SM"),
    ("A literature review of graph databases", "SEC"),
    ("Literature survey: caching", "SEC"),
    ("A secondary study of test smells", "SEC"),
    ("SYSTEMATIC   REVIEW OF TRIALS", "SLR"),
    ("Reviewing systematic errors", "NONE"),
]


def test_title_classifier(criterion):
    with criterion("title classifier: 20 titles"):
        assert len(TITLES) == 20
        wrong = [(t, c, classify_title(t)) for t, c in TITLES if classify_title(t) != c]
        assert wrong == []
