"""Filtered link-prediction ranking: MRR, Hits@K and breakdowns.

For every evaluated triple (h, r, t) two queries are ranked: the tail
query (h, r, ?) and the head query (t, r~, ?) through the reciprocal
relation row, so a model is never transposed. All other known-true
answers of a query (over train + valid + test) are removed before the
rank is taken ("filtered" setting).

Ties are broken either pessimistically (true answer placed after every
equal-scored rival, the default, so a constant model scores no better
than chance) or uniformly at random.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RelationClass, TripleStore
from .model import EmbeddingTable, score_batch

TIE_RULES = ("pessimistic", "random")
HITS_AT = (1, 3, 10)


@dataclass
class EvalReport:
    mrr: float
    hits: dict[int, float]
    per_relation: dict[int, tuple[float, int]]
    per_class: dict[str, float]
    direction: str
    num_queries: int
    tie_rule: str = "pessimistic"
    split: str = ""

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "direction": self.direction,
            "tie_rule": self.tie_rule,
            "num_queries": self.num_queries,
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "per_relation": {
                str(rid): {"mrr": m, "count": c} for rid, (m, c) in sorted(self.per_relation.items())
            },
            "per_class": dict(sorted(self.per_class.items())),
        }


def _rank_from_scores(scores, true_t, excluded, tie_rule, rng):
    s_true = scores[true_t]
    keep = np.ones(len(scores), dtype=bool)
    if excluded:
        keep[list(excluded)] = False
    keep[true_t] = True
    rest = scores[keep]
    greater = int(np.count_nonzero(rest > s_true))
    equal_rivals = int(np.count_nonzero(rest == s_true)) - 1
    if tie_rule == "pessimistic":
        return 1 + greater + equal_rivals
    return 1 + greater + int(rng.integers(0, equal_rivals + 1))


def filtered_rank(
    query: tuple[int, int, int],
    table: EmbeddingTable,
    filter_index: dict[tuple[int, int], set[int]],
    tie_rule: str = "pessimistic",
    rng: np.random.Generator | None = None,
) -> int:
    """Filtered rank (>= 1) of the true answer for one (head, rel, true_tail) query.

    ``rel`` may be a reciprocal relation id for head prediction. The query
    triple itself must be present in the filter index, otherwise the store
    and the query disagree and a ValueError is raised.
    """
    if tie_rule not in TIE_RULES:
        raise ValueError(f"tie_rule must be one of {TIE_RULES}, got {tie_rule!r}")
    h, r, true_t = (int(x) for x in query)
    known = filter_index.get((h, r))
    if known is None or true_t not in known:
        raise ValueError(f"query ({h}, {r}, {true_t}) is not covered by the filter index")
    if tie_rule == "random" and rng is None:
        rng = np.random.default_rng(0)
    scores = score_batch(table, h, r)
    excluded = known - {true_t}
    return _rank_from_scores(scores, true_t, excluded, tie_rule, rng)


def evaluate(
    split: str,
    table: EmbeddingTable,
    store: TripleStore,
    classes: list[RelationClass] | None = None,
    tie_rule: str = "pessimistic",
    direction: str = "both",
    seed: int = 0,
) -> EvalReport:
    """Rank every triple of a split in the requested direction(s).

    Per-relation results merge the head and tail queries of each original
    relation; per-class results group relations by their complexity class
    when ``classes`` is given.
    """
    if direction not in ("tail", "head", "both"):
        raise ValueError(f"direction must be tail, head or both, got {direction!r}")
    triples = store.split(split)
    if len(triples) == 0:
        raise ValueError(f"split {split!r} is empty")
    rng = np.random.default_rng(seed)
    nr = store.num_relations

    rr_all: list[float] = []
    ranks_all: list[int] = []
    per_rel: dict[int, list[float]] = {}
    for h, r, t in triples.tolist():
        queries = []
        if direction in ("tail", "both"):
            queries.append((h, r, t))
        if direction in ("head", "both"):
            queries.append((t, r + nr, h))
        for q in queries:
            rank = filtered_rank(q, table, store.filter_index, tie_rule, rng)
            ranks_all.append(rank)
            rr_all.append(1.0 / rank)
            per_rel.setdefault(r, []).append(1.0 / rank)

    ranks = np.asarray(ranks_all)
    rr = np.asarray(rr_all)
    hits = {k: float(np.mean(ranks <= k)) for k in HITS_AT}
    per_relation = {rid: (float(np.mean(v)), len(v)) for rid, v in per_rel.items()}

    per_class: dict[str, float] = {}
    if classes is not None:
        label_of = {c.relation_id: c.label for c in classes}
        by_label: dict[str, list[float]] = {}
        for rid, values in per_rel.items():
            label = label_of.get(rid)
            if label is not None:
                by_label.setdefault(label, []).extend(values)
        per_class = {label: float(np.mean(v)) for label, v in by_label.items()}

    return EvalReport(
        mrr=float(rr.mean()),
        hits=hits,
        per_relation=per_relation,
        per_class=per_class,
        direction=direction,
        num_queries=len(rr),
        tie_rule=tie_rule,
        split=split,
    )
