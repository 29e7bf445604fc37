"""Per-category probabilistic level model.

Observed variables of a chunk:

* shapes: maximal 4-connected same-type regions (:class:`Shape`)
* relation sets: cardinal-point difference vectors from a shape to every
  other shape in its chunk (:class:`RelationSet`)
* count vectors: per-type sprite counts (:class:`CountVector`)

Latent variables learned per category:

* styles: k-medoids clusters of (shape, relation set) pairs of one sprite type
* the L node: styles, count vectors and the conditional table
  ``P(style_1, rel | style_2)`` where ``rel`` is the rounded centroid offset of a
  shape of ``style_1`` relative to a shape of ``style_2``.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .clustering import Categorization, categorize, estimate_k_medoids, kmedoids
from .corpus import BACKGROUND_ID, Level, LevelChunk, TileLegend, segment_chunks
from .errors import InvariantError, ModelError

Cell = tuple[int, int]
Mask = frozenset  # of (row, col) relative to the bbox top-left
RelKey = tuple[int, int]  # (dx, dy) in tiles, x = column, y = row

REQUIRE_THRESHOLD = 0.95
STYLE_K_MAX = 8
STYLE_DIM = 2


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def rel_key(dx: float, dy: float) -> RelKey:
    return (round_half_away(dx), round_half_away(dy))


@dataclass(frozen=True)
class Shape:
    sprite_type: int
    cells: frozenset
    source_chunk: int = 0

    def __post_init__(self):
        if not self.cells:
            raise ModelError("a shape needs at least one cell")
        if self.sprite_type == BACKGROUND_ID:
            raise ModelError("background never forms shapes")

    @cached_property
    def bbox(self) -> tuple[int, int, int, int]:
        rows = [r for r, _ in self.cells]
        cols = [c for _, c in self.cells]
        return min(rows), min(cols), max(rows), max(cols)

    @cached_property
    def center(self) -> tuple[float, float]:
        top, left, bottom, right = self.bbox
        return (left + right + 1) / 2, (top + bottom + 1) / 2

    @cached_property
    def cardinals(self) -> dict[str, tuple[float, float]]:
        """N/S/E/W anchor points in (x, y) = (col, row) coordinates."""
        top, left, bottom, right = self.bbox
        cx, cy = self.center
        return {"N": (cx, top), "S": (cx, bottom + 1), "E": (right + 1, cy), "W": (left, cy)}

    @cached_property
    def mask(self) -> Mask:
        top, left, _, _ = self.bbox
        return frozenset((r - top, c - left) for r, c in self.cells)

    @property
    def first_cell(self) -> Cell:
        return min(self.cells)


@dataclass(frozen=True)
class RelationVectors:
    north: tuple[float, float]
    south: tuple[float, float]
    east: tuple[float, float]
    west: tuple[float, float]

    @property
    def centroid_offset(self) -> tuple[float, float]:
        vs = (self.north, self.south, self.east, self.west)
        return sum(v[0] for v in vs) / 4, sum(v[1] for v in vs) / 4

    def as_array(self) -> np.ndarray:
        return np.array([*self.north, *self.south, *self.east, *self.west], dtype=float)

    def __neg__(self) -> "RelationVectors":
        return RelationVectors(*((-x, -y) for x, y in (self.north, self.south, self.east, self.west)))


def relation_vectors(a: Shape, b: Shape) -> RelationVectors:
    """Same-cardinal differences ``b - a`` for the ordered pair (a, b)."""
    if a == b:
        raise ModelError("relation_vectors needs two distinct shapes")
    ca, cb = a.cardinals, b.cardinals
    diff = [(cb[k][0] - ca[k][0], cb[k][1] - ca[k][1]) for k in ("N", "S", "E", "W")]
    return RelationVectors(*diff)


@dataclass(frozen=True, eq=False)
class RelationSet:
    owner: Shape
    relations: tuple[tuple[Shape, RelationVectors], ...]

    def vectors(self) -> np.ndarray:
        if not self.relations:
            return np.zeros((0, 8))
        return np.array([rv.as_array() for _, rv in self.relations])


def build_relation_set(shape: Shape, chunk_shapes: Sequence[Shape]) -> RelationSet:
    if shape not in chunk_shapes:
        raise ModelError("shape is not part of the given chunk shapes")
    rels = tuple((other, relation_vectors(shape, other)) for other in chunk_shapes if other != shape)
    return RelationSet(shape, rels)


def extract_shapes(chunk: LevelChunk | np.ndarray, source_chunk: int = 0) -> list[Shape]:
    """Maximal 4-connected components per non-background type, ordered by first cell."""
    grid = chunk.grid if isinstance(chunk, LevelChunk) else np.asarray(chunk)
    shapes = []
    for sprite in np.unique(grid).tolist():
        if sprite == BACKGROUND_ID:
            continue
        labels, n = ndimage.label(grid == sprite)
        for comp in range(1, n + 1):
            cells = frozenset((int(r), int(c)) for r, c in np.argwhere(labels == comp))
            shapes.append(Shape(int(sprite), cells, source_chunk))
    shapes.sort(key=lambda s: s.first_cell)
    return shapes


def chunk_observations(chunk: LevelChunk | np.ndarray, source_chunk: int = 0) -> list[tuple[Shape, RelationSet]]:
    shapes = extract_shapes(chunk, source_chunk)
    return [(s, RelationSet(s, tuple((o, relation_vectors(s, o)) for o in shapes if o is not s))) for s in shapes]


@dataclass(frozen=True)
class CountVector:
    counts: Mapping[int, int]
    source_chunk: int = 0

    def total(self) -> int:
        return sum(self.counts.values())


def count_vector(chunk: LevelChunk | np.ndarray, source_chunk: int = 0) -> CountVector:
    grid = chunk.grid if isinstance(chunk, LevelChunk) else np.asarray(chunk)
    values, counts = np.unique(grid, return_counts=True)
    return CountVector(
        {int(v): int(n) for v, n in zip(values, counts) if v != BACKGROUND_ID}, source_chunk
    )


def chunk_diagonal(height: int, width: int) -> float:
    return math.hypot(height, width)


def _jaccard_distance(a: Mask, b: Mask) -> float:
    union = len(a | b)
    return 1.0 - len(a & b) / union if union else 0.0


def _chamfer(p: np.ndarray, q: np.ndarray) -> float:
    if len(p) == 0 and len(q) == 0:
        return 0.0
    if len(p) == 0 or len(q) == 0:
        return math.inf
    d = cdist(p, q)
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


def feature_distance(mask_a: Mask, vecs_a: np.ndarray, mask_b: Mask, vecs_b: np.ndarray, chunk_diag: float) -> float:
    geometry = _jaccard_distance(mask_a, mask_b)
    relation = min(1.0, _chamfer(vecs_a, vecs_b) / chunk_diag)
    return 0.5 * geometry + 0.5 * relation


def style_distance(a: tuple[Shape, RelationSet], b: tuple[Shape, RelationSet], chunk_diag: float) -> float:
    """Half geometry (1 - Jaccard of top-left aligned masks), half relation-set Chamfer distance.

    The Chamfer term is the symmetric mean nearest-neighbour distance between
    the two sets of 8-d cardinal vectors, scaled by ``chunk_diag`` and clamped
    to [0, 1]. An empty set against a non-empty one counts as 1.
    """
    (sa, ra), (sb, rb) = a, b
    if sa.sprite_type != sb.sprite_type:
        raise ModelError(f"style_distance between types {sa.sprite_type} and {sb.sprite_type}")
    return feature_distance(sa.mask, ra.vectors(), sb.mask, rb.vectors(), chunk_diag)


def _mask_key(mask: Mask) -> tuple:
    return tuple(sorted(mask))


@dataclass(frozen=True, eq=False)
class Style:
    id: str
    sprite_type: int
    geometry_pool: tuple[tuple[Mask, int], ...]
    chunk_ids: frozenset
    medoid_mask: Mask
    medoid_relations: np.ndarray
    # (mask, (top, left)) of every training member; seeds generation
    placements: tuple[tuple[Mask, tuple[int, int]], ...] = ()
    members: tuple[tuple[Shape, RelationSet], ...] = ()
    medoid: int | None = None

    @property
    def modal_mask(self) -> Mask:
        return self.geometry_pool[0][0]

    @property
    def size(self) -> int:
        return sum(n for _, n in self.geometry_pool)

    def relabeled(self, new_id: str, chunk_ids: Iterable[int] | None = None) -> "Style":
        return Style(
            new_id,
            self.sprite_type,
            self.geometry_pool,
            frozenset(self.chunk_ids if chunk_ids is None else chunk_ids),
            self.medoid_mask,
            self.medoid_relations,
            self.placements,
            self.members,
            self.medoid,
        )


def geometry_pool(masks: Iterable[Mask]) -> tuple[tuple[Mask, int], ...]:
    tally = Counter(masks)
    return tuple(sorted(tally.items(), key=lambda kv: (-kv[1], _mask_key(kv[0]))))


def style_id(prefix: str, sprite_type: int, index: int) -> str:
    return f"{prefix}{sprite_type:03d}.{index:02d}"


def _collect(chunks: Sequence[LevelChunk]) -> list[list[tuple[Shape, RelationSet]]]:
    return [chunk_observations(chunk, i) for i, chunk in enumerate(chunks)]


def learn_styles(
    category_chunks: Sequence[LevelChunk],
    sprite_type: int,
    seed: int = 0,
    id_prefix: str = "",
    k_max: int = STYLE_K_MAX,
    observations: list[list[tuple[Shape, RelationSet]]] | None = None,
) -> list[Style]:
    if not category_chunks:
        raise ModelError("cannot learn styles from an empty category")
    if observations is None:
        observations = _collect(category_chunks)
    members = [obs for chunk_obs in observations for obs in chunk_obs if obs[0].sprite_type == sprite_type]
    if not members:
        return []
    height, width = category_chunks[0].grid.shape
    diag = chunk_diagonal(height, width)
    masks = [s.mask for s, _ in members]
    vecs = [r.vectors() for _, r in members]
    n = len(members)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = feature_distance(masks[i], vecs[i], masks[j], vecs[j], diag)
    # K = n fits perfectly and drives the distortion ratio to 0; require two members per style on average
    k, _ = estimate_k_medoids(dist, max(1, min(k_max, n // 2)), seed, dim=STYLE_DIM)
    assignment = kmedoids(n, dist, k, seed)
    styles = []
    for c, medoid in enumerate(assignment.medoids):
        idx = assignment.members(c)
        local = tuple(members[i] for i in idx)
        styles.append(
            Style(
                style_id(id_prefix, sprite_type, c),
                sprite_type,
                geometry_pool(masks[i] for i in idx),
                frozenset(members[i][0].source_chunk for i in idx),
                masks[medoid],
                vecs[medoid],
                tuple((masks[i], members[i][0].bbox[:2]) for i in idx),
                local,
                idx.index(medoid),
            )
        )
    return styles


@dataclass(eq=False)
class LNode:
    """Learned model of one chunk category.

    ``cond_counts[s2][(s1, rel)]`` counts ordered shape pairs (A, B) in a chunk
    with A in ``s1``, B in ``s2`` and ``rel`` the rounded offset of A relative
    to B; ``cond_table`` is the same table normalised per ``s2``.
    ``pair_stats[(s1, s2)]`` holds ``(n, sum of 8-d cardinal vectors from s1 to s2)``.
    """

    id: str
    styles: tuple[Style, ...]
    count_vectors: tuple[CountVector, ...]
    cond_counts: dict[str, dict[tuple[str, RelKey], int]]
    pair_stats: dict[tuple[str, str], tuple[int, np.ndarray]]
    chunk_shape: tuple[int, int]
    tag: str | None = None

    def __post_init__(self):
        self.styles = tuple(sorted(self.styles, key=lambda s: s.id))
        self.count_vectors = tuple(self.count_vectors)
        self._styles = {s.id: s for s in self.styles}
        if len(self._styles) != len(self.styles):
            raise ModelError(f"LNode {self.id!r} has duplicate style ids")
        self.cond_table: dict[str, dict[tuple[str, RelKey], float]] = {}
        for s2, row in self.cond_counts.items():
            if s2 not in self._styles:
                raise ModelError(f"cond table conditions on unknown style {s2!r}")
            total = sum(row.values())
            if total <= 0:
                continue
            for (s1, _), n in row.items():
                if s1 not in self._styles:
                    raise ModelError(f"cond table references unknown style {s1!r}")
                if n < 0:
                    raise ModelError("negative count in cond table")
            self.cond_table[s2] = {key: n / total for key, n in row.items()}
        self.cooccur: dict[tuple[str, str], float] = {}
        for a in self.styles:
            for b in self.styles:
                if b.chunk_ids:
                    p = len(a.chunk_ids & b.chunk_ids) / len(b.chunk_ids)
                    if p > 0:
                        self.cooccur[(a.id, b.id)] = p
        self._ranked: dict[tuple[str, str], list[tuple[RelKey, float]]] | None = None
        self._required: dict[str, list[str]] = {}
        present = [{t for t, n in cv.counts.items() if n > 0} for cv in self.count_vectors]
        self._required_types: dict[int, list[int]] = {}
        for t in sorted(set().union(*present)) if present else []:
            with_t = [p for p in present if t in p]
            self._required_types[t] = [
                u for u in sorted(set().union(*with_t)) if u != t and sum(u in p for p in with_t) / len(with_t) > REQUIRE_THRESHOLD
            ]

    def style(self, sid: str) -> Style:
        try:
            return self._styles[sid]
        except KeyError:
            raise ModelError(f"unknown style id {sid!r} in LNode {self.id!r}") from None

    def has_style(self, sid: str) -> bool:
        return sid in self._styles

    @property
    def style_ids(self) -> list[str]:
        return [s.id for s in self.styles]

    def styles_of_type(self, sprite_type: int) -> list[Style]:
        return [s for s in self.styles if s.sprite_type == sprite_type]

    @property
    def sprite_types(self) -> set[int]:
        return {s.sprite_type for s in self.styles}

    def cooccurrence(self, s1: str, s2: str) -> float:
        """p(s1 | s2): fraction of chunks containing ``s2`` that also contain ``s1``."""
        self.style(s1)
        self.style(s2)
        return self.cooccur.get((s1, s2), 0.0)

    def required_by(self, sid: str) -> list[str]:
        """Styles that co-occur with ``sid`` in more than 95% of its chunks."""
        if sid not in self._required:
            self._required[sid] = [
                s.id for s in self.styles if s.id != sid and self.cooccur.get((s.id, sid), 0.0) > REQUIRE_THRESHOLD
            ]
        return self._required[sid]

    def required_types(self, sprite_type: int) -> list[int]:
        """Sprite types present in more than 95% of the training chunks that contain ``sprite_type``."""
        return self._required_types.get(sprite_type, [])

    def ranked_relations(self, s1: str, s2: str) -> list[tuple[RelKey, float]]:
        """Offsets of ``s1`` relative to ``s2`` ordered by decreasing probability."""
        if self._ranked is None:
            ranked: dict[tuple[str, str], list[tuple[RelKey, float]]] = defaultdict(list)
            for cond, row in self.cond_table.items():
                for (other, rel), p in row.items():
                    ranked[(other, cond)].append((rel, p))
            for entries in ranked.values():
                entries.sort(key=lambda e: (-e[1], e[0]))
            self._ranked = dict(ranked)
        return self._ranked.get((s1, s2), [])

    def edge_feature(self, s1: str, s2: str) -> np.ndarray | None:
        stat = self.pair_stats.get((s1, s2))
        if stat is None or stat[0] == 0:
            return None
        return stat[1] / stat[0]


def check_lnode(lnode: LNode) -> None:
    """Raise :class:`InvariantError` if the conditional table is not normalised per conditioning style."""
    for s2, row in lnode.cond_table.items():
        total = math.fsum(row.values())
        if abs(total - 1.0) > 1e-9:
            raise InvariantError(f"LNode {lnode.id!r}: row {s2!r} sums to {total!r}")
    for s in lnode.styles:
        if not s.geometry_pool or s.size <= 0:
            raise InvariantError(f"LNode {lnode.id!r}: style {s.id!r} has no geometry")


def cond_prob(lnode: LNode, s1: str, rel: RelKey, s2: str) -> float:
    """P(s1, rel | s2); zero for unseen combinations."""
    lnode.style(s2)
    lnode.style(s1)
    row = lnode.cond_table.get(s2)
    if row is None:
        return 0.0
    return row.get((s1, tuple(rel)), 0.0)


def learn_lnode(
    category_id: str,
    category_chunks: Sequence[LevelChunk],
    seed: int = 0,
    tag: str | None = None,
    k_max: int = STYLE_K_MAX,
) -> LNode:
    if not category_chunks:
        raise ModelError("cannot learn an LNode from an empty category")
    observations = _collect(category_chunks)
    types = sorted({s.sprite_type for chunk_obs in observations for s, _ in chunk_obs})
    prefix = f"{category_id}/"
    styles: list[Style] = []
    for t in types:
        # every type starts from the same seed so that renaming types cannot change the clustering
        styles.extend(learn_styles(category_chunks, t, seed, prefix, k_max, observations))
    owner: dict[tuple[int, frozenset], str] = {}
    for st in styles:
        for shape, _ in st.members:
            owner[(shape.source_chunk, shape.cells)] = st.id
    cond_counts: dict[str, Counter] = defaultdict(Counter)
    sums: dict[tuple[str, str], np.ndarray] = {}
    counts: Counter = Counter()
    for chunk_obs in observations:
        for a, rel_set in chunk_obs:
            sa = owner[(a.source_chunk, a.cells)]
            for b, vectors in rel_set.relations:
                sb = owner[(b.source_chunk, b.cells)]
                # vectors run from a to b; the table stores b relative to a, conditioned on a
                dx, dy = vectors.centroid_offset
                cond_counts[sa][(sb, rel_key(dx, dy))] += 1
                key = (sa, sb)
                counts[key] += 1
                sums[key] = sums.get(key, 0.0) + vectors.as_array()
    pair_stats = {key: (counts[key], sums[key]) for key in sorted(counts)}
    count_vectors = tuple(count_vector(chunk, i) for i, chunk in enumerate(category_chunks))
    return LNode(
        category_id,
        tuple(styles),
        count_vectors,
        {s2: dict(row) for s2, row in cond_counts.items()},
        pair_stats,
        tuple(category_chunks[0].grid.shape),
        tag,
    )


def assign_style(lnode: LNode, shape_with_relations: tuple[Shape, RelationSet]) -> str | None:
    """Nearest style of the shape's type by distance to its medoid; ties go to the lower id."""
    shape, rel_set = shape_with_relations
    candidates = lnode.styles_of_type(shape.sprite_type)
    if not candidates:
        return None
    diag = chunk_diagonal(*lnode.chunk_shape)
    vecs = rel_set.vectors()
    best, best_d = None, math.inf
    for st in candidates:
        d = feature_distance(shape.mask, vecs, st.medoid_mask, st.medoid_relations, diag)
        if d < best_d:
            best, best_d = st.id, d
    return best


def _majority_tag(tags: Iterable[str | None]) -> str | None:
    tally = Counter(t for t in tags if t is not None)
    if not tally:
        return None
    return sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


@dataclass(eq=False)
class LearnedCorpus:
    lnodes: list[LNode]
    categorization: Categorization
    chunk_counts: dict[str, int] = field(default_factory=dict)


def learn_corpus(
    levels: Sequence[Level],
    legend: TileLegend,
    width: int = 16,
    stride: int = 16,
    seed: int = 0,
    recluster_threshold: float = 1.25,
    category_seed: int | None = None,
) -> LearnedCorpus:
    """Segment, categorize and learn one LNode per chunk category."""
    chunks = [c for level in levels for c in segment_chunks(level, width, stride)]
    if len(chunks) < 2:
        raise ModelError(f"corpus yields {len(chunks)} chunk(s); at least 2 are needed")
    tags = {level.id: level.tag for level in levels}
    cat = categorize(chunks, legend, seed if category_seed is None else category_seed, recluster_threshold)
    lnodes = []
    for category in cat.categories:
        tag = _majority_tag(tags.get(c.source_level) for c in category.chunks)
        lnodes.append(learn_lnode(category.id, category.chunks, seed, tag))
    return LearnedCorpus(lnodes, cat, {c.id: len(c.chunks) for c in cat.categories})
