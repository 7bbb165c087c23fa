"""Command-line interface.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
Every run writes a reproducibility header (version, command, seed and
input digests) to standard error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
import warnings
from pathlib import Path

import apsw

from . import __version__
from .errors import CorpusError, UsageError

log = logging.getLogger("corpusdb")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def digest(path) -> str:
    """sha256 of a file, or of the sorted names and sizes of a directory's files."""
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(f"{child.relative_to(path).as_posix()}\0{child.stat().st_size}\n".encode())
        return "dir:" + h.hexdigest()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _header(argv, args, inputs) -> None:
    err = sys.stderr
    print(f"# corpusdb {__version__}", file=err)
    print("# command: " + " ".join(argv), file=err)
    print(f"# seed: {getattr(args, 'seed', None)}", file=err)
    for path in inputs:
        if path is not None and Path(path).exists():
            print(f"# input {path} sha256 {digest(path)}", file=err)


def _emit(rows, header, out) -> int:
    if out:
        f = open(out, "w", newline="", encoding="utf-8")
    else:
        f = sys.stdout
    try:
        writer = csv.writer(f)
        writer.writerow(header)
        n = 0
        for row in rows:
            writer.writerow(row)
            n += 1
    finally:
        if out:
            f.close()
    return n


def _attachments(values) -> dict[str, str]:
    out = {}
    for value in values or []:
        name, sep, path = value.partition("=")
        if not sep or not name.isidentifier() or not path:
            raise UsageError(f"--attach expects name=path, got {value!r}")
        out[name] = path
    return out


def _sql_text(value: str) -> str:
    path = Path(value)
    if len(value) < 4096 and "\n" not in value and path.is_file():
        return path.read_text(encoding="utf-8")
    return value


# commands

def cmd_populate(args):
    from .populate import populate
    from .schema import Sampling, SliceSpec
    from .sources import enumerate_containers
    if (args.sample is None) != (args.seed is None):
        raise UsageError("--sample and --seed must be given together")
    columns = frozenset(c.strip() for c in (args.columns or "").split(",") if c.strip())
    spec = SliceSpec(
        columns=columns,
        row_expression=args.row_expr,
        sampling=Sampling(args.sample, args.seed) if args.sample is not None else None,
    )
    report = populate(args.db, enumerate_containers(args.source), spec,
                      attach=_attachments(args.attach), batch_size=args.batch_size,
                      resume_after=args.resume_after)
    print(report.summary())


def cmd_populate_persons(args):
    from .populate import populate_persons
    report = populate_persons(args.db, args.archive, only_linked=args.only_linked)
    print(report.summary())


def cmd_populate_refs(args):
    from .populate import populate_reference_tables
    paths = {k: getattr(args, k) for k in ("ror", "journals", "funders", "doaj", "asjc")}
    if not any(paths.values()):
        raise UsageError("give at least one of --ror, --journals, --funders, --doaj, --asjc")
    report = populate_reference_tables(args.db, **paths)
    print(report.summary())


def cmd_query(args):
    from .query import query, query_to_csv
    from .sources import enumerate_containers
    sql = _sql_text(args.sql)
    source = enumerate_containers(args.source)
    attach = _attachments(args.attach)
    if args.csv:
        n = query_to_csv(source, sql, args.partition, args.csv, attach=attach)
    else:
        header: list[str] = []
        rows = query(source, sql, args.partition, attach=attach, description=header)
        first = next(rows, None)
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        n = 0
        if first is not None:
            writer.writerow(first)
            n = 1
        for row in rows:
            writer.writerow(row)
            n += 1
    print(f"{n} rows", file=sys.stderr)


def cmd_link_ror(args):
    from .link import automaton_from_db, match_affiliations
    automaton = automaton_from_db(args.db, args.min_length)
    n = match_affiliations(args.db, automaton)
    print(f"patterns: {len(automaton.entries)}, pruned: {len(automaton.pruned)}")
    print(f"linked affiliations: {n}")


def cmd_link_parent(args):
    from .link import propagate_to_parent
    print(f"updated links: {propagate_to_parent(args.db)}")


def cmd_run(args):
    from .query import run_script_set
    from .scripts import resolve_script
    scripts = [resolve_script(s) for s in args.scripts]
    for entry in run_script_set(args.db, scripts):
        print(f"{entry.path}\t{entry.statements} statements\t{entry.rows_returned} rows"
              f"\t{entry.rows_changed} changes\t{entry.seconds:.3f}s")


def cmd_synth(args):
    from .synthetic import write_dataset
    paths = write_dataset(args.out, args.containers, args.works, args.seed)
    for name, path in sorted(paths.items()):
        print(f"{name}\t{path}")


def cmd_metric(args):
    from . import metrics
    name = args.name
    if name == "cd5":
        graph = metrics.build_graph(args.db)
        rows = ((r.doi, repr(r.cd), r.n)
                for r in metrics.cd_index_all(graph, args.horizon, args.workers))
        n = _emit(rows, ("doi", "cd", "n"), args.csv)
    elif name == "jif":
        n = _emit(metrics.impact_factor(args.db, _year(args)), ("issn", "jif"), args.csv)
    elif name == "h5-journal":
        n = _emit(metrics.h5_index(args.db, _year(args), "journal"), ("issn", "h5"), args.csv)
    elif name == "h5-person":
        n = _emit(metrics.h5_index(args.db, _year(args), "person"), ("orcid", "h5"), args.csv)
    elif name == "fields":
        rows = ((s.field_a, s.field_b, s.citations_ab, s.citations_ba, s.strength,
                 repr(s.fundamentalness_of_a))
                for s in metrics.field_pair_stats(args.db, args.general))
        n = _emit(rows, ("field_a", "field_b", "citations_ab", "citations_ba", "strength",
                         "fundamentalness_of_a"), args.csv)
    elif name == "synthesis":
        n = _emit(metrics.synthesis_counts(args.db), ("year", "category", "works"), args.csv)
    elif name == "authors":
        e = metrics.estimate_author_count(args.db, args.where)
        n = _emit([(e.n_an, e.n_o, e.n_on, repr(e.estimate), int(e.low_confidence))],
                  ("n_an", "n_o", "n_on", "estimate", "low_confidence"), args.csv)
    elif name == "clustering":
        n = _emit(_clustering_rows(args), ("doi", "clustering"), args.csv)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown metric {name}")
    print(f"{n} rows", file=sys.stderr)


def _year(args):
    if args.year is None:
        raise UsageError(f"metric {args.name} needs --year")
    return args.year


def _clustering_rows(args):
    from .metrics import build_graph, clustering_sample, pseudo_random_rank
    graph = build_graph(args.db)
    if args.doi:
        nodes = [graph.node(d) for d in args.doi]
    else:
        if args.sample is None or args.seed is None:
            raise UsageError("clustering needs --doi, or --sample with --seed")
        ranked = sorted(range(len(graph)),
                        key=lambda i: (pseudo_random_rank(i + 1, args.seed, 9), i))
        nodes = ranked[:args.sample]
    for node in nodes:
        yield graph.dois[node], repr(clustering_sample(graph, node))


METRICS = ("cd5", "jif", "h5-journal", "h5-person", "fields", "synthesis", "clustering",
           "authors")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="corpusdb", description="Populate and analyse scholarly metadata databases.")
    p.add_argument("--version", action="version", version=f"corpusdb {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("populate", help="populate a database from a container set")
    s.add_argument("db")
    s.add_argument("--source", required=True, help="directory of .json.gz containers")
    s.add_argument("--row-expr", help="SQL condition selecting works")
    s.add_argument("--columns", help="comma-separated table.column list (table.* allowed)")
    s.add_argument("--sample", type=float, help="container sampling probability")
    s.add_argument("--seed", type=int, help="sampling seed")
    s.add_argument("--attach", action="append", metavar="NAME=PATH")
    s.add_argument("--batch-size", type=int, default=1000)
    s.add_argument("--resume-after", type=int, metavar="CONTAINER")
    s.set_defaults(func=cmd_populate, inputs=lambda a: [a.source])

    s = sub.add_parser("populate-persons", help="load an ORCID-style person archive")
    s.add_argument("db")
    s.add_argument("--archive", required=True)
    s.add_argument("--only-linked", action="store_true",
                   help="only persons appearing as work authors")
    s.set_defaults(func=cmd_populate_persons, inputs=lambda a: [a.archive])

    s = sub.add_parser("populate-refs", help="load organization, journal and subject tables")
    s.add_argument("db")
    for name in ("ror", "journals", "funders", "doaj", "asjc"):
        s.add_argument(f"--{name}")
    s.set_defaults(func=cmd_populate_refs,
                   inputs=lambda a: [a.ror, a.journals, a.funders, a.doaj, a.asjc])

    s = sub.add_parser("query", help="run SQL directly over a container set")
    s.add_argument("--source", required=True)
    s.add_argument("--sql", required=True, help="SQL text or a file containing it")
    s.add_argument("--partition", action="store_true", help="evaluate per container")
    s.add_argument("--csv", help="output file (default stdout)")
    s.add_argument("--attach", action="append", metavar="NAME=PATH")
    s.set_defaults(func=cmd_query, inputs=lambda a: [a.source])

    s = sub.add_parser("link-ror", help="link affiliations to organizations")
    s.add_argument("db")
    s.add_argument("--min-length", type=int, default=3, help="shortest usable pattern")
    s.set_defaults(func=cmd_link_ror, inputs=lambda a: [a.db])

    s = sub.add_parser("link-parent", help="move organization links to top-level parents")
    s.add_argument("db")
    s.set_defaults(func=cmd_link_parent, inputs=lambda a: [a.db])

    s = sub.add_parser("metric", help="compute a bibliometric measure")
    s.add_argument("name", choices=METRICS)
    s.add_argument("db")
    s.add_argument("--csv", help="output file (default stdout)")
    s.add_argument("--year", type=int, help="census year (jif, h5-*)")
    s.add_argument("--horizon", type=float, default=5, help="CD window in years")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--general", action="store_true", help="roll fields up to general fields")
    s.add_argument("--where", help="SQL condition over works (authors)")
    s.add_argument("--doi", action="append", help="focal work (clustering)")
    s.add_argument("--sample", type=int, help="number of focal works (clustering)")
    s.add_argument("--seed", type=int, help="ranking seed (clustering)")
    s.set_defaults(func=cmd_metric, inputs=lambda a: [a.db])

    s = sub.add_parser("run", help="run SQL scripts in order, one transaction each")
    s.add_argument("db")
    s.add_argument("scripts", nargs="+", help="script files or bundled:<name>")
    s.set_defaults(func=cmd_run, inputs=lambda a: [a.db])

    s = sub.add_parser("synth", help="write a synthetic data set")
    s.add_argument("out")
    s.add_argument("--containers", type=int, default=10)
    s.add_argument("--works", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth, inputs=lambda a: [])
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help and --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _header(["corpusdb"] + argv, args, args.inputs(args))
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (CorpusError, apsw.Error, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
