"""K-means, PAM k-medoids and distortion-ratio model selection.

The distortion ratio follows Pham, Dimov & Nguyen (2005)::

    f(1) = 1
    f(K) = S_K / (alpha_K * S_{K-1})   if S_{K-1} > 0, else 1
    alpha_2 = 1 - 3 / (4 d)
    alpha_K = alpha_{K-1} + (1 - alpha_{K-1}) / 6

where ``S_K`` is the clustering distortion with K clusters and ``d`` the data
dimensionality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .corpus import LevelChunk, TileLegend, chunk_features
from .errors import ClusteringError

ACCEPT_RATIO = 0.85
MAX_ITER = 300
CENTER_TOL = 1e-9


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    k: int
    inertia: float
    centers: np.ndarray | None = None
    medoids: tuple[int, ...] | None = None
    # kmeans: inertia after each assignment step; kmedoids: cost after each accepted swap
    history: tuple[float, ...] = ()

    def members(self, cluster: int) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == cluster]


@dataclass(frozen=True)
class DistortionCurve:
    f_values: dict[int, float]
    distortions: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "f": {str(k): v for k, v in self.f_values.items()},
            "S": {str(k): v for k, v in self.distortions.items()},
        }


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ClusteringError("kmeans needs a non-empty sequence of equal-length vectors")
    return arr


def _farthest_point_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(len(x)))]
    nearest = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[chosen].copy()


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = cdist(x, centers, "sqeuclidean")
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(x)), labels]


def kmeans(points, k: int, seed: int = 0) -> ClusterAssignment:
    """Lloyd's algorithm with farthest-point seeding (first seed drawn from ``seed``)."""
    x = _as_points(points)
    if k < 1 or k > len(x):
        raise ClusteringError(f"k={k} must lie in [1, {len(x)}]")
    rng = np.random.default_rng(seed)
    centers = _farthest_point_seeds(x, k, rng)
    history = []
    for _ in range(MAX_ITER):
        labels, d2 = _assign(x, centers)
        history.append(float(d2.sum()))
        new_centers = centers.copy()
        for c in range(k):
            mask = labels == c
            if mask.any():
                new_centers[c] = x[mask].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < CENTER_TOL:
            break
    labels, d2 = _assign(x, centers)
    return ClusterAssignment(tuple(int(v) for v in labels), k, float(d2.sum()), centers=centers, history=tuple(history))


ZERO_DISTORTION = 1e-12


def alpha(k: int, dim: int) -> float:
    """Weight factor of the distortion ratio for ``k >= 2`` clusters in ``dim`` dimensions."""
    a = 1.0 - 3.0 / (4.0 * dim)
    for _ in range(3, k + 1):
        a = a + (1.0 - a) / 6.0
    return a


def distortion_curve(distortions: dict[int, float], dim: int) -> DistortionCurve:
    # distortions this far below the largest one are rounding residue of a perfect fit
    floor = ZERO_DISTORTION * max(distortions.values(), default=0.0)
    f = {}
    for k in sorted(distortions):
        if k == 1 or distortions[k - 1] <= floor:
            f[k] = 1.0
        else:
            f[k] = distortions[k] / (alpha(k, dim) * distortions[k - 1])
    return DistortionCurve(f, dict(distortions))


def select_k(curve: DistortionCurve, accept: float = ACCEPT_RATIO) -> int:
    """K minimising f(K) among values below ``accept``; 1 when none qualifies."""
    best_k, best_f = 1, math.inf
    for k, fk in sorted(curve.f_values.items()):
        if k > 1 and fk < accept and fk < best_f:
            best_k, best_f = k, fk
    return best_k


def estimate_k(points, k_max: int, seed: int = 0) -> tuple[int, DistortionCurve]:
    x = _as_points(points)
    if k_max < 1:
        raise ClusteringError("k_max must be >= 1")
    k_max = min(k_max, len(x))
    distortions = {k: kmeans(x, k, seed).inertia for k in range(1, k_max + 1)}
    curve = distortion_curve(distortions, x.shape[1])
    return select_k(curve), curve


def _distance_matrix(n: int, distance, rng: np.random.Generator) -> np.ndarray:
    if callable(distance):
        d = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                d[i, j] = distance(i, j)
        # spot-check symmetry on a handful of pairs
        for _ in range(min(8, n * (n - 1) // 2)):
            i, j = rng.choice(n, size=2, replace=False)
            if not math.isclose(distance(int(j), int(i)), d[min(i, j), max(i, j)], rel_tol=1e-9, abs_tol=1e-12):
                raise ClusteringError(f"distance is not symmetric at ({i}, {j})")
        return d + d.T
    d = np.asarray(distance, dtype=float)
    if d.shape != (n, n):
        raise ClusteringError(f"distance matrix shape {d.shape} does not match n={n}")
    if not np.allclose(d, d.T, rtol=1e-9, atol=1e-12):
        raise ClusteringError("distance matrix is not symmetric")
    if (d < 0).any() or np.any(np.diag(d) != 0):
        raise ClusteringError("distances must be non-negative with a zero diagonal")
    return d


def kmedoids(n: int, distance: Callable[[int, int], float] | np.ndarray, k: int, seed: int = 0) -> ClusterAssignment:
    """PAM swap descent from seeded random medoids.

    ``distance`` is either an ``(n, n)`` matrix or a callable ``(i, j) -> float``.
    The swap loop minimises the total distance to the nearest medoid; the
    reported ``inertia`` is the sum of squared nearest-medoid distances.
    """
    if n < 1:
        raise ClusteringError("kmedoids needs at least one item")
    if k < 1 or k > n:
        raise ClusteringError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    d = _distance_matrix(n, distance, rng)
    medoids = sorted(int(i) for i in rng.choice(n, size=k, replace=False))

    def cost_of(meds):
        return float(d[:, meds].min(axis=1).sum())

    cost = cost_of(medoids)
    history = [cost]
    while True:
        best = (cost, None, None)
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        for pos in range(k):
            others = medoids[:pos] + medoids[pos + 1:]
            base = d[:, others].min(axis=1) if others else np.full(n, np.inf)
            swap_costs = np.minimum(base[:, None], d).sum(axis=0)
            swap_costs[is_medoid] = np.inf
            o = int(np.argmin(swap_costs))
            if swap_costs[o] < best[0] - 1e-12:
                best = (float(swap_costs[o]), pos, o)
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
        medoids.sort()
        cost = best[0]
        history.append(cost)
    nearest = d[:, medoids]
    labels = np.argmin(nearest, axis=1)
    for c, m in enumerate(medoids):
        labels[m] = c
    dist = nearest[np.arange(n), labels]
    return ClusterAssignment(
        tuple(int(v) for v in labels), k, float(np.sum(dist ** 2)), medoids=tuple(medoids), history=tuple(history)
    )


def estimate_k_medoids(distance_matrix: np.ndarray, k_max: int, seed: int = 0, dim: int = 2) -> tuple[int, DistortionCurve]:
    """Distortion-ratio K selection over k-medoids, with a heuristic dimension ``dim``."""
    d = np.asarray(distance_matrix, dtype=float)
    n = d.shape[0]
    k_max = max(1, min(k_max, n))
    distortions = {k: kmedoids(n, d, k, seed).inertia for k in range(1, k_max + 1)}
    curve = distortion_curve(distortions, dim)
    return select_k(curve), curve


@dataclass(frozen=True, eq=False)
class Category:
    id: str
    chunks: tuple[LevelChunk, ...]
    indices: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class Categorization:
    categories: list[Category]
    k: int
    curve: DistortionCurve
    reclustered: dict[str, DistortionCurve] = field(default_factory=dict)


def _mean_pairwise(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(pdist(x).mean())


def categorize(
    chunks: Sequence[LevelChunk],
    legend: TileLegend,
    seed: int = 0,
    recluster_threshold: float = 1.25,
    k_max: int = 10,
) -> Categorization:
    if len(chunks) < 2:
        raise ClusteringError("categorizing needs at least 2 chunks")
    x = np.array([chunk_features(c, legend) for c in chunks])
    k, curve = estimate_k(x, min(k_max, len(x)), seed)
    top = kmeans(x, k, seed)
    corpus_mean = _mean_pairwise(x)
    categories = []
    reclustered = {}
    for c in range(k):
        idx = top.members(c)
        if not idx:
            continue
        sub = x[idx]
        spread = _mean_pairwise(sub)
        if len(idx) >= 2 and corpus_mean > 0 and spread > recluster_threshold * corpus_mean:
            sub_k, sub_curve = estimate_k(sub, min(k_max, len(idx)), seed)
            reclustered[str(c)] = sub_curve
            if sub_k > 1:
                inner = kmeans(sub, sub_k, seed)
                for child in range(sub_k):
                    members = [idx[i] for i in inner.members(child)]
                    if members:
                        categories.append(Category(f"{c}-{child}", tuple(chunks[i] for i in members), tuple(members)))
                continue
        categories.append(Category(str(c), tuple(chunks[i] for i in idx), tuple(idx)))
    return Categorization(categories, k, curve, reclustered)


def categorize_chunks(
    chunks: Sequence[LevelChunk],
    legend: TileLegend,
    seed: int = 0,
    recluster_threshold: float = 1.25,
) -> list[Category]:
    return categorize(chunks, legend, seed, recluster_threshold).categories
