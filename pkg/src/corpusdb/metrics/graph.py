"""In-memory citation graph, CD index and neighbourhood clustering."""

from __future__ import annotations

import datetime
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

import apsw
import numpy as np

from ..errors import DomainError

log = logging.getLogger(__name__)

_EPOCH = datetime.date(1970, 1, 1).toordinal()
DAYS_PER_YEAR = 365.25


def days_since_epoch(year, month=None, day=None) -> int | None:
    """Day number of a publication date; missing month or day count as 1."""
    if year is None:
        return None
    try:
        return datetime.date(int(year), int(month or 1), int(day or 1)).toordinal() - _EPOCH
    except (ValueError, TypeError, OverflowError):
        return None


def _csr(n: int, sources: np.ndarray, targets: np.ndarray):
    order = np.lexsort((targets, sources))
    sources, targets = sources[order], targets[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, sources + 1, 1)
    return np.cumsum(ptr), targets.astype(np.int64)


@dataclass
class CitationGraph:
    """Dense-id citation graph with sorted adjacency arrays.

    Node ids follow the order of lowercased DOIs.  An edge ``a -> b``
    means that ``a`` cites ``b``.
    """

    dois: list[str]
    timestamps: np.ndarray
    out_ptr: np.ndarray
    out_idx: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray
    dangling: int = 0
    _index: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_edges(cls, dois: Iterable[str], timestamps: Iterable[int],
                   edges: Iterable[tuple[int, int]], dangling: int = 0) -> "CitationGraph":
        """Build from node lists in id order and ``(citing, cited)`` id pairs.

        Duplicate edges and self-citations are dropped.
        """
        dois = list(dois)
        n = len(dois)
        pairs = {(a, b) for a, b in edges if a != b}
        arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        out_ptr, out_idx = _csr(n, arr[:, 0], arr[:, 1])
        in_ptr, in_idx = _csr(n, arr[:, 1], arr[:, 0])
        return cls(dois, np.asarray(list(timestamps), dtype=np.int64),
                   out_ptr, out_idx, in_ptr, in_idx, dangling)

    def __len__(self):
        return len(self.dois)

    @property
    def edge_count(self) -> int:
        return len(self.out_idx)

    def node(self, doi: str) -> int:
        if not self._index:
            self._index = {d: i for i, d in enumerate(self.dois)}
        try:
            return self._index[doi.lower()]
        except KeyError:
            raise DomainError(f"unknown work {doi!r}") from None

    def _check(self, node) -> int:
        if isinstance(node, str):
            return self.node(node)
        if isinstance(node, (int, np.integer)) and 0 <= node < len(self.dois):
            return int(node)
        raise DomainError(f"unknown node {node!r}")

    def cites(self, node: int) -> np.ndarray:
        return self.out_idx[self.out_ptr[node]:self.out_ptr[node + 1]]

    def cited_by(self, node: int) -> np.ndarray:
        return self.in_idx[self.in_ptr[node]:self.in_ptr[node + 1]]


def build_graph(db) -> CitationGraph:
    """Citation graph of the dated works of a populated database."""
    con = apsw.Connection(str(db), flags=apsw.SQLITE_OPEN_READONLY)
    try:
        dated: dict[str, int] = {}
        work_node: dict[int, str] = {}
        for work_id, doi, y, m, d in con.execute(
                "SELECT id, doi, published_year, published_month, published_day FROM works"):
            if doi is None:
                continue
            t = days_since_epoch(y, m, d)
            if t is None:
                continue
            key = doi.lower()
            dated.setdefault(key, t)
            work_node[work_id] = key
        dois = sorted(dated)
        index = {d: i for i, d in enumerate(dois)}
        edges = []
        dangling = 0
        for work_id, ref in con.execute(
                "SELECT work_id, doi FROM work_references WHERE doi IS NOT NULL"):
            target = index.get(ref.lower())
            if target is None:
                dangling += 1
                continue
            source = work_node.get(work_id)
            if source is not None:
                edges.append((index[source], target))
    finally:
        con.close()
    graph = CitationGraph.from_edges(dois, (dated[d] for d in dois), edges, dangling)
    log.info("graph: %d nodes, %d edges, %d dangling references",
             len(graph), graph.edge_count, dangling)
    return graph


@dataclass(frozen=True)
class CDResult:
    doi: str
    cd: float
    n: int
    numerator: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.n)


def horizon_days(years) -> int:
    return int(years * DAYS_PER_YEAR)


def cd_index(graph: CitationGraph, focal, horizon_years=5) -> CDResult | None:
    """Disruption of ``focal`` over works published within the horizon.

    Returns ``None`` when no work in the window cites the focal work or
    any of its references.
    """
    focal = graph._check(focal)
    t = graph.timestamps[focal]
    end = t + horizon_days(horizon_years)
    direct = graph.cited_by(focal)
    refs = graph.cites(focal)
    if len(refs):
        indirect = np.unique(np.concatenate([graph.cited_by(r) for r in refs]))
    else:
        indirect = np.empty(0, dtype=np.int64)
    window = np.union1d(direct, indirect)
    ts = graph.timestamps[window]
    window = window[(ts > t) & (ts <= end)]
    if not len(window):
        return None
    b = np.isin(window, direct, assume_unique=True)
    f = np.isin(window, indirect, assume_unique=True)
    numerator = int(b.sum()) - 2 * int((b & f).sum())
    return CDResult(graph.dois[focal], numerator / len(window), len(window), numerator)


def cd_index_all(graph: CitationGraph, horizon_years=5, workers: int = 1) -> Iterator[CDResult]:
    """CD index of every node in id order; undefined results are skipped."""
    if workers < 1:
        raise DomainError("workers must be at least 1")
    nodes = range(len(graph))
    if workers == 1:
        results = (cd_index(graph, i, horizon_years) for i in nodes)
        yield from (r for r in results if r is not None)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(graph) // (workers * 4))
        for r in pool.map(lambda i: cd_index(graph, i, horizon_years), nodes, chunksize=chunk):
            if r is not None:
                yield r


def neighbourhood(graph: CitationGraph, focal) -> set[int]:
    """The focal node, its citation neighbours, and theirs."""
    focal = graph._check(focal)

    def adjacent(v):
        return set(graph.cites(v).tolist()) | set(graph.cited_by(v).tolist())

    first = adjacent(focal)
    nodes = {focal} | first
    for v in first:
        nodes |= adjacent(v)
    return nodes


def clustering_sample(graph: CitationGraph, focal) -> float:
    """Mean local clustering coefficient of the undirected distance-2 neighbourhood."""
    nodes = neighbourhood(graph, focal)
    adj = {v: set() for v in nodes}
    for v in nodes:
        for u in graph.cites(v).tolist():
            if u in adj:
                adj[v].add(u)
                adj[u].add(v)
    total = 0.0
    for v, neighbours in adj.items():
        k = len(neighbours)
        if k < 2:
            continue
        links = sum(len(adj[u] & neighbours) for u in neighbours) / 2
        total += 2 * links / (k * (k - 1))
    return total / len(adj)
