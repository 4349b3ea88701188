"""Ranking metrics: AP, MAP, P@K, MAP@k and run-file evaluation.

AP over a full ranking divides by the total number of relevant items;
MAP@k divides by the number of relevant items actually found in the
truncated ranking (trec-style). Both conventions are exposed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ParseError, load_qrels

__all__ = [
    "MetricError",
    "RankedRun",
    "average_precision",
    "precision_at_k",
    "map_at_k",
    "mean_average_precision",
    "evaluate_run",
    "read_run_file",
    "write_run_file",
]


class MetricError(ValueError):
    pass


@dataclass
class RankedRun:
    """Per-query ordered candidate lists with scores (descending)."""

    queries: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def add(self, query_id: str, doc_id: str, score: float) -> None:
        self.queries.setdefault(query_id, []).append((doc_id, float(score)))

    def sort(self) -> None:
        for q in self.queries:
            self.queries[q].sort(key=lambda p: (-p[1], p[0]))

    def ranking(self, query_id: str) -> list[str]:
        return [d for d, _ in self.queries[query_id]]


def average_precision(ranking, relevant, denominator: str = "relevant_total") -> float:
    """Mean of precision-at-hit over relevant items found in `ranking`.

    denominator 'relevant_total' divides by |relevant| (standard AP);
    'retrieved_hits' divides by the number of relevant items found, the
    convention used for truncated rankings.
    """
    ranking = list(ranking)
    if len(set(ranking)) != len(ranking):
        raise MetricError("duplicate ids in ranking")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for rank, doc in enumerate(ranking, start=1):
        if doc in relevant:
            hits += 1
            precision_sum += hits / rank
    if denominator == "relevant_total":
        return precision_sum / len(relevant)
    if denominator == "retrieved_hits":
        return precision_sum / hits if hits else 0.0
    raise MetricError(f"unknown denominator mode {denominator!r}")


def precision_at_k(ranking, relevant, k: int) -> float:
    """|relevant in top-k| / k; k is the denominator even for short rankings."""
    if k < 1:
        raise MetricError("k must be >= 1")
    relevant = set(relevant)
    top = list(ranking)[:k]
    if len(set(top)) != len(top):
        raise MetricError("duplicate ids in ranking")
    return sum(1 for d in top if d in relevant) / k


def mean_average_precision(run: dict, qrels: dict, skip_empty: bool = False) -> float:
    """MAP over full (untruncated) rankings."""
    aps = []
    for q, ranking in run.items():
        if q not in qrels:
            raise MetricError(f"query {q!r} missing from qrels")
        rel = qrels[q]
        if not rel and skip_empty:
            continue
        aps.append(average_precision(ranking, rel))
    if not aps:
        return 0.0
    return sum(aps) / len(aps)


def map_at_k(run: dict, qrels: dict, k: int, skip_empty: bool = False) -> float:
    """MAP over rankings truncated at k (retrieved-hits denominator)."""
    if k < 1:
        raise MetricError("k must be >= 1")
    aps = []
    for q, ranking in run.items():
        if q not in qrels:
            raise MetricError(f"query {q!r} missing from qrels")
        rel = qrels[q]
        if not rel and skip_empty:
            continue
        aps.append(average_precision(list(ranking)[:k], rel,
                                     denominator="retrieved_hits"))
    if not aps:
        return 0.0
    return sum(aps) / len(aps)


# --- run files ----------------------------------------------------------------

def write_run_file(path, run: RankedRun, run_id: str) -> None:
    """trec-style TSV: query Q0 doc rank score run_id."""
    run.sort()
    with open(path, "w", encoding="utf-8") as fh:
        for q in run.queries:
            for rank, (doc, score) in enumerate(run.queries[q], start=1):
                fh.write(f"{q}\tQ0\t{doc}\t{rank}\t{score:.10g}\t{run_id}\n")


def read_run_file(path) -> RankedRun:
    """Read a trec-style 6-column run file or a 5-column classification run
    (topic_id, tweet_id, score, rank, run_id)."""
    run = RankedRun()
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) == 6:
                q, _, doc, _, score, _ = parts
            elif len(parts) == 5:
                q, doc, score, _, _ = parts
            else:
                raise ParseError(f"expected 5 or 6 TSV columns, got {len(parts)}",
                                 path, lineno)
            try:
                run.add(q, doc, float(score))
            except ValueError as exc:
                raise ParseError(f"bad score {score!r}", path, lineno) from exc
    run.sort()
    return run


def evaluate_run(run_path, qrels_path, metrics: list[str]) -> dict:
    """Score a run file against qrels; metric names: 'map', 'p@K', 'map@K'.

    Returns a JSON-serializable report with aggregate and per-query values.
    """
    run = read_run_file(run_path)
    qrels = load_qrels(qrels_path)
    rankings = {q: run.ranking(q) for q in run.queries}
    for q in rankings:
        if q not in qrels.pairs:
            raise MetricError(f"query {q!r} missing from qrels")
    rel = {q: set(qrels.pairs[q]) for q in rankings}
    report = {"run": str(run_path), "num_queries": len(rankings),
              "aggregate": {}, "per_query": {q: {} for q in rankings}}
    for name in metrics:
        key = name.lower()
        if key == "map":
            for q in rankings:
                report["per_query"][q][key] = average_precision(rankings[q], rel[q])
            report["aggregate"][key] = mean_average_precision(rankings, rel)
        elif key.startswith("p@"):
            k = int(key[2:])
            vals = {q: precision_at_k(rankings[q], rel[q], k) for q in rankings}
            report["per_query"] = {q: {**report["per_query"][q], key: vals[q]}
                                   for q in rankings}
            report["aggregate"][key] = sum(vals.values()) / len(vals)
        elif key.startswith("map@"):
            k = int(key[4:])
            for q in rankings:
                report["per_query"][q][key] = average_precision(
                    rankings[q][:k], rel[q], denominator="retrieved_hits")
            report["aggregate"][key] = map_at_k(rankings, rel, k)
        else:
            raise MetricError(f"unknown metric {name!r}")
    return report


def dump_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
