"""Average pairwise conditional probability of a set of styled shapes.

For shapes ``0..N-1`` with styles ``g`` and centres ``c``::

    score = (1/N) * sum_i sum_{j != i} P(g_i, round(c_i - c_j) | g_j)

Shapes whose style is ``None`` (unassignable under a model) still count in
``N`` but contribute no probability mass. ``N <= 1`` scores 0.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import LevelChunk
from .model import LNode, RelationSet, Shape, assign_style, chunk_observations, rel_key


def pair_probability_sum(styles: Sequence[str | None], centers: Sequence[tuple[float, float]], lnode: LNode) -> float:
    """Unnormalised double sum over ordered pairs."""
    table = lnode.cond_table
    total = 0.0
    n = len(styles)
    for i in range(n):
        si = styles[i]
        if si is None:
            continue
        xi, yi = centers[i]
        for j in range(n):
            if j == i:
                continue
            sj = styles[j]
            if sj is None:
                continue
            row = table.get(sj)
            if row is None:
                continue
            xj, yj = centers[j]
            total += row.get((si, rel_key(xi - xj, yi - yj)), 0.0)
    return total


def average_pair_probability(styles: Sequence[str | None], centers: Sequence[tuple[float, float]], lnode: LNode) -> float:
    n = len(styles)
    if n <= 1:
        return 0.0
    return pair_probability_sum(styles, centers, lnode) / n


def score_observations(observations: Sequence[tuple[Shape, RelationSet]], lnode: LNode) -> float:
    styles = [assign_style(lnode, obs) for obs in observations]
    centers = [shape.center for shape, _ in observations]
    return average_pair_probability(styles, centers, lnode)


def score_chunk(chunk: LevelChunk | np.ndarray, lnode: LNode) -> float:
    return score_observations(chunk_observations(chunk), lnode)


def best_model(chunk: LevelChunk | np.ndarray, models: Sequence[LNode]) -> tuple[LNode, float]:
    """Highest-scoring LNode for ``chunk``; ties go to the lower LNode id."""
    observations = chunk_observations(chunk)
    best, best_score = None, -1.0
    for lnode in sorted(models, key=lambda m: m.id):
        s = score_observations(observations, lnode)
        if s > best_score:
            best, best_score = lnode, s
    return best, best_score
