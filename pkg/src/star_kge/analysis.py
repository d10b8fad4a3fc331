"""Two-hop path statistics over relation pairs and their imbalance ratios.

For an ordered relation pair (i, j) the path count is the number of entity
chains (e1, e2, e3) with (e1, ri, e2) and (e2, rj, e3) both in the train
split; self-returning (e1 = e3) and self-looping (e1 = e2 or e2 = e3)
chains count by default. The per-pair imbalance

    psi(i, j) = (max(c_ij, c_ji) - min(c_ij, c_ji)) / (c_ij + c_ji)

is 0 when both orders are equally frequent and 1 when only one order
occurs. The dataset-level ratio Psi is the fraction of two-hop paths whose
unordered pair occurs in a single order only.

Counting joins the train split on the middle entity: with per-entity
incidence count matrices In[e, i] and Out[e, j] the ordered counts are
In^T @ Out, since chains through different middle entities are disjoint.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import TripleStore


@dataclass
class PairCounts:
    """Ordered two-hop path counts: counts[i, j] = #chains realizing ri then rj."""

    counts: np.ndarray
    num_relations: int
    degenerate_excluded: bool = False

    def pair(self, i: int, j: int) -> tuple[int, int]:
        return int(self.counts[i, j]), int(self.counts[j, i])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ImbalanceReport:
    psi: dict[tuple[int, int], float]
    Psi: float
    triple_both: int
    triple_single: int
    counts: PairCounts
    include_diagonal: bool = True
    relation_names: list[str] | None = None

    def to_dict(self) -> dict:
        return {
            "Psi": self.Psi,
            "triple_both": self.triple_both,
            "triple_single": self.triple_single,
            "policy": {
                "include_diagonal_pairs": self.include_diagonal,
                "exclude_degenerate_paths": self.counts.degenerate_excluded,
            },
            "pairs": [
                {
                    "i": i,
                    "j": j,
                    "name_i": self.relation_names[i] if self.relation_names else str(i),
                    "name_j": self.relation_names[j] if self.relation_names else str(j),
                    "count_ij": int(self.counts.counts[i, j]),
                    "count_ji": int(self.counts.counts[j, i]),
                    "psi": p,
                }
                for (i, j), p in sorted(self.psi.items())
            ],
        }


def _incidence(triples: np.ndarray, num_entities: int, num_relations: int, col: int) -> np.ndarray:
    m = np.zeros((num_entities, num_relations))
    np.add.at(m, (triples[:, col], triples[:, 1]), 1.0)
    return m


def count_two_paths(store: TripleStore, exclude_degenerate: bool = False) -> PairCounts:
    """Count ordered two-hop chains for every relation pair on the train split.

    ``exclude_degenerate`` drops chains whose three entities are not all
    distinct (self-loops on either hop and e1 = e3 returns), for sensitivity
    analysis. Reciprocal relations never participate. All products stay in
    float64 where every intermediate value is an exact integer, then cast
    back.
    """
    tr = store.train
    ne, nr = store.num_entities, store.num_relations
    in_mat = _incidence(tr, ne, nr, col=2)  # in_mat[e, r]  = #(. , r, e)
    out_mat = _incidence(tr, ne, nr, col=0)  # out_mat[e, r] = #(e , r, .)
    counts = in_mat.T @ out_mat

    if exclude_degenerate:
        loops = np.zeros((ne, nr))
        self_loops = tr[tr[:, 0] == tr[:, 2]]
        np.add.at(loops, (self_loops[:, 0], self_loops[:, 1]), 1.0)
        # chains with e1 = e2 (first hop loops) and e2 = e3 (second hop loops)
        n_12 = loops.T @ out_mat
        n_23 = in_mat.T @ loops
        n_all = loops.T @ loops
        # chains with e1 = e3: join each edge with the reversed edge set
        by_pair: dict[tuple[int, int], list[int]] = defaultdict(list)
        for h, r, t in tr.tolist():
            by_pair[(h, t)].append(r)
        n_13 = np.zeros((nr, nr))
        for h, r, t in tr.tolist():
            for r2 in by_pair.get((t, h), ()):
                n_13[r, r2] += 1.0
        counts = counts - n_12 - n_23 - n_13 + 2.0 * n_all

    out = np.rint(counts).astype(np.int64)
    if (out < 0).any():
        raise AssertionError("negative path count, exclusion bookkeeping is wrong")
    return PairCounts(out, nr, degenerate_excluded=exclude_degenerate)


def pair_imbalance(counts: PairCounts, i: int, j: int) -> float:
    """Imbalance of one relation pair; undefined (raises) when no chain exists.

    Written as (max - min) / sum, algebraically identical to
    2 * max / sum - 1 but exact for small integer counts.
    """
    c_ij, c_ji = counts.pair(i, j)
    total = c_ij + c_ji
    if total == 0:
        raise ValueError(f"relation pair ({i}, {j}) has no two-hop chains in either order")
    return (max(c_ij, c_ji) - min(c_ij, c_ji)) / total


def dataset_imbalance(counts: PairCounts, include_diagonal: bool = True) -> ImbalanceReport:
    """Classify every unordered pair as both-orders or single-order and
    aggregate the dataset imbalance ratio.

    A pair {i, j} with chains in both orders contributes its chains to the
    balanced mass, a pair seen in one order only to the imbalanced mass;
    Psi = single / (both + single). Diagonal pairs (i = j) have only one
    order, which by default counts as `both` (the two orders coincide);
    ``include_diagonal=False`` drops them instead.
    """
    c = counts.counts
    nr = counts.num_relations
    psi: dict[tuple[int, int], float] = {}
    both = 0
    single = 0
    for i in range(nr):
        for j in range(i, nr):
            if i == j:
                if not include_diagonal:
                    continue
                c_ii = int(c[i, i])
                if c_ii == 0:
                    continue
                psi[(i, i)] = 0.0
                both += c_ii
                continue
            c_ij, c_ji = int(c[i, j]), int(c[j, i])
            total = c_ij + c_ji
            if total == 0:
                continue
            psi[(i, j)] = pair_imbalance(counts, i, j)
            if c_ij > 0 and c_ji > 0:
                both += total
            else:
                single += total
    if both + single == 0:
        raise ValueError("no two-hop chains at all, imbalance ratio is undefined")
    return ImbalanceReport(
        psi=psi,
        Psi=single / (both + single),
        triple_both=both,
        triple_single=single,
        counts=counts,
        include_diagonal=include_diagonal,
    )


# export ------------------------------------------------------------------------


def _psi_color(psi: float) -> str:
    """Blue for balanced pairs, fading to gray as the imbalance grows."""
    b = (31, 119, 180)
    g = (150, 150, 150)
    mix = tuple(round(b[k] + (g[k] - b[k]) * psi) for k in range(3))
    return f"rgb({mix[0]},{mix[1]},{mix[2]})"


def _arc_svg(report: ImbalanceReport, width=900, height=420) -> str:
    names = report.relation_names or [str(i) for i in range(report.counts.num_relations)]
    used = sorted({i for pair in report.psi for i in pair})
    if not used:
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
            "<!-- no relation pairs --></svg>"
        )
    x_of = {
        rid: 40 + (width - 80) * (k / max(len(used) - 1, 1)) for k, rid in enumerate(used)
    }
    base_y = height - 60
    max_count = max(
        report.counts.counts[i, j] + report.counts.counts[j, i] for i, j in report.psi
    )
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for (i, j), psi in sorted(report.psi.items()):
        total = int(report.counts.counts[i, j] + report.counts.counts[j, i])
        rel_weight = total / max_count
        stroke = 0.75 + 7.0 * math.sqrt(rel_weight)
        opacity = 0.25 + 0.7 * rel_weight
        color = _psi_color(psi)
        x1, x2 = x_of[i], x_of[j]
        if i == j:
            r = 12.0
            path = (
                f'<circle cx="{x1:.1f}" cy="{base_y - r:.1f}" r="{r:.1f}" fill="none" '
                f'stroke="{color}" stroke-width="{stroke:.2f}" stroke-opacity="{opacity:.3f}"/>'
            )
        else:
            arc_h = min(abs(x2 - x1) * 0.6, base_y - 30)
            path = (
                f'<path d="M {x1:.1f} {base_y} C {x1:.1f} {base_y - arc_h:.1f}, '
                f'{x2:.1f} {base_y - arc_h:.1f}, {x2:.1f} {base_y}" fill="none" '
                f'stroke="{color}" stroke-width="{stroke:.2f}" stroke-opacity="{opacity:.3f}">'
                f"<title>{names[i]} / {names[j]}: {total} paths, psi={psi:.3f}</title></path>"
            )
        parts.append(path)
    for rid in used:
        x = x_of[rid]
        parts.append(f'<circle cx="{x:.1f}" cy="{base_y}" r="3" fill="#333"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{base_y + 14}" font-size="9" text-anchor="end" '
            f'transform="rotate(-45 {x:.1f} {base_y + 14})">{names[rid]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def export_arc_data(report: ImbalanceReport, out_path, fmt: str = "csv") -> Path:
    """Write the pair table as CSV or render the pairs as an SVG arc diagram.

    CSV rows are (rel_i, rel_j, count_ij, count_ji, psi); in the SVG, arc
    color encodes the pair imbalance (blue balanced, gray imbalanced) and
    stroke width/opacity encode the relative chain count.
    """
    out_path = Path(out_path)
    if fmt == "csv":
        names = report.relation_names or [str(i) for i in range(report.counts.num_relations)]
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rel_i", "rel_j", "count_ij", "count_ji", "psi"])
            for (i, j), psi in sorted(report.psi.items()):
                writer.writerow(
                    [
                        names[i],
                        names[j],
                        int(report.counts.counts[i, j]),
                        int(report.counts.counts[j, i]),
                        f"{psi:.6f}",
                    ]
                )
    elif fmt == "svg":
        out_path.write_text(_arc_svg(report), encoding="utf-8")
    else:
        raise ValueError(f"unknown export format {fmt!r} (expected csv or svg)")
    return out_path
