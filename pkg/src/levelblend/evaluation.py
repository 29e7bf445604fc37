"""Level scoring, ranking and rank statistics.

Exact null distributions are enumerated for small samples (Mann-Whitney:
all label assignments of the pooled midranks; Wilcoxon: all sign patterns);
larger samples use the tie-corrected normal approximation with continuity
correction.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .corpus import Level, segment_chunks
from .errors import ModelError, StatsError
from .model import LNode
from .scoring import best_model

EXACT_MAX_TOTAL = 12  # Mann-Whitney: n_a + n_b
EXACT_MAX_PAIRS = 12  # Wilcoxon: nonzero differences
_REL_TOL = 1e-9

ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class ScoreDistribution:
    scores: tuple[float, ...]
    level_id: str
    model_set_id: str = "models"
    chunk_indices: tuple[int, ...] = ()
    best_lnodes: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def median(self) -> float:
        return float(statistics.median(self.scores)) if self.scores else 0.0

    @property
    def mean(self) -> float:
        return float(statistics.fmean(self.scores)) if self.scores else 0.0


def score_level(
    level: Level,
    models: Sequence[LNode],
    chunk_width: int,
    sample: int | None = None,
    seed: int = 0,
    model_set_id: str = "models",
) -> ScoreDistribution:
    """Per-chunk maximum score over ``models``, optionally subsampled without replacement."""
    if not models:
        raise ModelError("score_level needs at least one model")
    chunks = segment_chunks(level, chunk_width, chunk_width)
    indices = list(range(len(chunks)))
    if sample is not None and sample < len(chunks):
        rng = np.random.default_rng(seed)
        indices = sorted(int(i) for i in rng.choice(len(chunks), size=sample, replace=False))
    scores, winners = [], []
    for i in indices:
        lnode, best = best_model(chunks[i], models)
        scores.append(best)
        winners.append(lnode.id)
    return ScoreDistribution(tuple(scores), level.id, model_set_id, tuple(indices), tuple(winners))


@dataclass(frozen=True)
class RankedLevel:
    rank: int
    level_id: str
    median: float
    mean: float


def rank_levels(levels: Sequence[Level], models: Sequence[LNode], chunk_width: int) -> list[RankedLevel]:
    """Descending by median chunk score; ties by descending mean, then level id."""
    dists = [score_level(level, models, chunk_width) for level in levels]
    order = sorted(dists, key=lambda d: (-d.median, -d.mean, d.level_id))
    return [RankedLevel(i + 1, d.level_id, d.median, d.mean) for i, d in enumerate(order)]


def _check_alternative(alternative: str) -> None:
    if alternative not in ALTERNATIVES:
        raise StatsError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _tail_p(null: Sequence[float], observed: float, center: float, alternative: str) -> float:
    """Tail probability of ``observed`` under an equiprobable enumerated null."""
    arr = np.asarray(null, dtype=float)
    tol = _REL_TOL * max(1.0, abs(observed))
    if alternative == "greater":
        hits = np.sum(arr >= observed - tol)
    elif alternative == "less":
        hits = np.sum(arr <= observed + tol)
    else:
        hits = np.sum(np.abs(arr - center) >= abs(observed - center) - tol)
    return float(min(1.0, hits / len(arr)))


def _normal_p(z: float, alternative: str) -> float:
    if alternative == "greater":
        return float(sps.norm.sf(z))
    if alternative == "less":
        return float(sps.norm.cdf(z))
    return float(min(1.0, 2 * sps.norm.sf(abs(z))))


def _values(x) -> np.ndarray:
    if isinstance(x, ScoreDistribution):
        x = x.scores
    return np.asarray(x, dtype=float)


def mann_whitney_u(a, b, alternative: str = "two-sided") -> tuple[float, float]:
    """U statistic of ``a`` (count of a > b pairs, ties counted half) and its p-value.

    ``alternative="greater"`` tests whether ``a`` tends to exceed ``b``.
    """
    _check_alternative(alternative)
    x, y = _values(a), _values(b)
    na, nb = len(x), len(y)
    if na == 0 or nb == 0:
        raise StatsError("mann_whitney_u needs two non-empty samples")
    ranks = sps.rankdata(np.concatenate([x, y]))
    offset = na * (na + 1) / 2
    u = float(ranks[:na].sum() - offset)
    mean_u = na * nb / 2
    n = na + nb
    if n <= EXACT_MAX_TOTAL:
        null = [sum(ranks[list(idx)]) - offset for idx in itertools.combinations(range(n), na)]
        return u, _tail_p(null, u, mean_u, alternative)
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    sigma = math.sqrt(na * nb / 12 * ((n + 1) - tie_term))
    if sigma == 0:
        return u, 1.0
    diff = u - mean_u
    if alternative == "two-sided":
        diff = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    elif alternative == "greater":
        diff -= 0.5
    else:
        diff += 0.5
    return u, _normal_p(diff / sigma, alternative)


def wilcoxon_signed_rank(paired_a, paired_b, alternative: str = "two-sided") -> tuple[float, float]:
    """W+ (sum of ranks of positive a - b differences) and its p-value; zero differences dropped."""
    _check_alternative(alternative)
    x, y = _values(paired_a), _values(paired_b)
    if len(x) != len(y):
        raise StatsError(f"paired samples differ in length: {len(x)} vs {len(y)}")
    if len(x) == 0:
        raise StatsError("wilcoxon_signed_rank needs at least one pair")
    d = x - y
    d = d[d != 0]
    if len(d) == 0:
        raise StatsError("no nonzero differences")
    n = len(d)
    ranks = sps.rankdata(np.abs(d))
    w = float(ranks[d > 0].sum())
    mean_w = ranks.sum() / 2
    if n <= EXACT_MAX_PAIRS:
        null = [float(np.dot(signs, ranks)) for signs in itertools.product((0, 1), repeat=n)]
        return w, _tail_p(null, w, mean_w, alternative)
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48
    sigma = math.sqrt(var)
    diff = w - mean_w
    if alternative == "two-sided":
        diff = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    elif alternative == "greater":
        diff -= 0.5
    else:
        diff += 0.5
    return w, _normal_p(diff / sigma, alternative)


def spearman(ranks_a: Sequence[float], ranks_b: Sequence[float]) -> tuple[float, float]:
    """Tie-corrected rank correlation with a two-sided t-approximation p-value (n - 2 df)."""
    a = np.asarray(ranks_a, dtype=float)
    b = np.asarray(ranks_b, dtype=float)
    if len(a) != len(b):
        raise StatsError(f"rankings differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 3:
        raise StatsError("spearman needs at least 3 observations")
    ra = sps.rankdata(a)
    rb = sps.rankdata(b)
    ca, cb = ra - ra.mean(), rb - rb.mean()
    denom = math.sqrt(float(np.dot(ca, ca)) * float(np.dot(cb, cb)))
    if denom == 0:
        raise StatsError("spearman is undefined for a constant ranking")
    rho = float(np.dot(ca, cb)) / denom
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1 - rho * rho))
    return rho, float(2 * sps.t.sf(abs(t), n - 2))
