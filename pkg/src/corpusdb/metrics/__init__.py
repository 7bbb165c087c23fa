"""Bibliometric measures over populated databases."""

import csv

from .bibliometrics import (
    AuthorCountEstimate, FieldPairStat, JournalImpact, classify_title, estimate_author_count,
    field_pair_stats, h5_index, h_index, h_index_grouped, impact_factor, impact_factor_details,
    is_citable, page_count, pseudo_random_rank, synthesis_counts,
)
from .graph import (
    CDResult, CitationGraph, build_graph, cd_index, cd_index_all, clustering_sample,
)


def write_csv(path, header, rows) -> int:
    """Write rows under a header row; returns the number of data rows."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            n += 1
    return n
