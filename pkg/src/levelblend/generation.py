"""Greedy chunk generation and level assembly.

A chunk grows from one seed shape towards a randomly drawn count vector.
Each step evaluates every candidate placement and keeps the one that
maximises the average pairwise conditional probability of the assembly.
Generation stops when the count target is met with no outstanding required
styles, when no placement is possible, or when no candidate reaches pair
probability 0.05 with any placed shape.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import BACKGROUND_ID, Level, LevelChunk, segment_chunks
from .errors import ModelError
from .model import CountVector, LNode, Mask, rel_key
from .scoring import average_pair_probability, best_model, pair_probability_sum

STOP_PROBABILITY = 0.05
DEFAULT_TOP_P = 5


class Move(NamedTuple):
    style: str
    mask: Mask
    anchor: tuple[int, int]  # (row, col) of the bbox top-left


@dataclass(frozen=True)
class PlacedShape:
    style: str
    sprite_type: int
    mask: Mask
    anchor: tuple[int, int]

    @property
    def cells(self) -> list[tuple[int, int]]:
        r0, c0 = self.anchor
        return [(r0 + r, c0 + c) for r, c in self.mask]

    @property
    def center(self) -> tuple[float, float]:
        h, w = _mask_dims(self.mask)
        return self.anchor[1] + w / 2, self.anchor[0] + h / 2


def _mask_dims(mask: Mask) -> tuple[int, int]:
    return max(r for r, _ in mask) + 1, max(c for _, c in mask) + 1


@dataclass
class Assembly:
    height: int
    width: int
    n_target: CountVector
    placed: list[PlacedShape] = field(default_factory=list)
    pending_required: deque = field(default_factory=deque)
    grid: np.ndarray = None
    type_counts: Counter = field(default_factory=Counter)
    pair_sum: float = 0.0

    def __post_init__(self):
        if self.grid is None:
            self.grid = np.full((self.height, self.width), BACKGROUND_ID, dtype=np.int32)

    @property
    def styles(self) -> list[str]:
        return [p.style for p in self.placed]

    @property
    def centers(self) -> list[tuple[float, float]]:
        return [p.center for p in self.placed]

    def fits(self, mask: Mask, anchor: tuple[int, int]) -> bool:
        r0, c0 = anchor
        for r, c in mask:
            rr, cc = r0 + r, c0 + c
            if not (0 <= rr < self.height and 0 <= cc < self.width):
                return False
            if self.grid[rr, cc] != BACKGROUND_ID:
                return False
        return True

    def unmet_types(self) -> list[int]:
        return [t for t, n in sorted(self.n_target.counts.items()) if self.type_counts[t] < n]

    def target_met(self) -> bool:
        return not self.unmet_types()

    def missing_required_types(self, lnode: LNode) -> list[int]:
        present = set(self.type_counts)
        return sorted({u for t in present for u in lnode.required_types(t) if u not in present})

    def place(self, shape: PlacedShape, increment: float) -> None:
        for r, c in shape.cells:
            self.grid[r, c] = shape.sprite_type
        self.placed.append(shape)
        self.type_counts[shape.sprite_type] += len(shape.mask)
        self.pair_sum += increment

    def rebuild(self, lnode: LNode) -> None:
        kept = list(self.placed)
        self.placed = []
        self.grid[:] = BACKGROUND_ID
        self.type_counts = Counter()
        self.pair_sum = 0.0
        for shape in kept:
            self.place(shape, 0.0)
        self.pair_sum = pair_probability_sum(self.styles, self.centers, lnode)


def score_assembly(assembly: Assembly, lnode: LNode) -> float:
    for sid in assembly.styles:
        lnode.style(sid)
    return average_pair_probability(assembly.styles, assembly.centers, lnode)


def _pair_terms(lnode: LNode, style: str, center: tuple[float, float], assembly: Assembly) -> tuple[float, float]:
    """Sum and max of the pair probabilities a new shape adds against every placed shape."""
    table = lnode.cond_table
    own_row = table.get(style, {})
    total, best = 0.0, 0.0
    x, y = center
    for placed in assembly.placed:
        px, py = placed.center
        p_new = table.get(placed.style, {}).get((style, rel_key(x - px, y - py)), 0.0)
        p_old = own_row.get((placed.style, rel_key(px - x, py - y)), 0.0)
        total += p_new + p_old
        best = max(best, p_new, p_old)
    return total, best


def _candidate_styles(assembly: Assembly, lnode: LNode) -> list[str]:
    out = list(assembly.pending_required)
    unmet = set(assembly.unmet_types()) | set(assembly.missing_required_types(lnode))
    out.extend(s.id for s in lnode.styles if s.sprite_type in unmet and s.id not in out)
    return out


def candidate_moves(
    assembly: Assembly,
    lnode: LNode,
    top_p: int = DEFAULT_TOP_P,
    rng: np.random.Generator | None = None,
) -> list[Move]:
    """Placements for still-needed and required styles at the most likely offsets from placed shapes.

    With ``rng`` given, each style's geometry is drawn from its pool by
    frequency instead of taking the modal mask.
    """
    moves, seen = [], set()
    for sid in _candidate_styles(assembly, lnode):
        style = lnode.style(sid)
        if rng is None:
            mask = style.modal_mask
        else:
            weights = np.array([n for _, n in style.geometry_pool], dtype=float)
            mask = style.geometry_pool[int(rng.choice(len(weights), p=weights / weights.sum()))][0]
        h, w = _mask_dims(mask)
        for placed in assembly.placed:
            px, py = placed.center
            for (dx, dy), _ in lnode.ranked_relations(sid, placed.style)[:top_p]:
                col, row = px + dx - w / 2, py + dy - h / 2
                for r in sorted({math.floor(row), math.ceil(row)}):
                    for c in sorted({math.floor(col), math.ceil(col)}):
                        key = (sid, r, c)
                        if key in seen:
                            continue
                        seen.add(key)
                        if assembly.fits(mask, (r, c)):
                            moves.append(Move(sid, mask, (r, c)))
    return moves


@dataclass
class GenerationResult:
    chunk: LevelChunk
    assembly: Assembly
    stop_reason: str  # "target_met" | "low_probability" | "no_candidates"
    final_max_pair: float | None
    steps: int
    pruned: int = 0

    @property
    def n_target(self) -> CountVector:
        return self.assembly.n_target


def _seed_move(lnode: LNode, target: CountVector, height: int, width: int, rng: np.random.Generator) -> Move | None:
    options = []
    for style in lnode.styles:
        for mask, anchor in style.placements:
            h, w = _mask_dims(mask)
            if anchor[0] + h <= height and anchor[1] + w <= width:
                options.append((style, mask, anchor))
    if not options:
        return None
    wanted = [o for o in options if target.counts.get(o[0].sprite_type, 0) > 0]
    pool = wanted or options
    style, mask, anchor = pool[int(rng.integers(len(pool)))]
    return Move(style.id, mask, tuple(anchor))


def _enqueue_required(assembly: Assembly, lnode: LNode, sid: str) -> None:
    placed = set(assembly.styles)
    for req in lnode.required_by(sid):
        if req not in placed and req not in assembly.pending_required:
            assembly.pending_required.append(req)


def _prune_unsatisfied(assembly: Assembly, lnode: LNode) -> int:
    """Drop shapes whose required styles or sprite types never made it into the chunk."""
    removed = 0
    while True:
        present = set(assembly.styles)
        types = {p.sprite_type for p in assembly.placed}
        keep = [
            p
            for p in assembly.placed
            if all(r in present for r in lnode.required_by(p.style))
            and all(u in types for u in lnode.required_types(p.sprite_type))
        ]
        if len(keep) == len(assembly.placed):
            break
        removed += len(assembly.placed) - len(keep)
        assembly.placed = keep
    if removed:
        assembly.rebuild(lnode)
    return removed


def generate(
    lnode: LNode,
    width: int | None = None,
    height: int | None = None,
    seed: int = 0,
    top_p: int = DEFAULT_TOP_P,
    sample_geometry: bool = False,
) -> GenerationResult:
    if not lnode.styles:
        raise ModelError(f"LNode {lnode.id!r} has no styles")
    height = height or lnode.chunk_shape[0]
    width = width or lnode.chunk_shape[1]
    rng = np.random.default_rng(seed)
    target = lnode.count_vectors[int(rng.integers(len(lnode.count_vectors)))] if lnode.count_vectors else CountVector({})
    assembly = Assembly(height, width, target)
    first = _seed_move(lnode, target, height, width, rng)
    if first is None:
        raise ModelError(f"LNode {lnode.id!r} has no shape that fits a {height}x{width} chunk")
    geometry_rng = rng if sample_geometry else None

    def apply(move: Move, increment: float):
        sid = move.style
        assembly.place(PlacedShape(sid, lnode.style(sid).sprite_type, move.mask, move.anchor), increment)
        if sid in assembly.pending_required:
            assembly.pending_required.remove(sid)
        _enqueue_required(assembly, lnode, sid)

    apply(first, 0.0)
    steps = 0
    final_max_pair = None
    # every placement covers at least one free cell
    for _ in range(height * width):
        if assembly.target_met() and not assembly.pending_required and not assembly.missing_required_types(lnode):
            reason = "target_met"
            break
        moves = candidate_moves(assembly, lnode, top_p, geometry_rng)
        if not moves:
            reason, final_max_pair = "no_candidates", 0.0
            break
        n_next = len(assembly.placed) + 1
        best_move, best_score, best_inc, max_pair = None, -1.0, 0.0, 0.0
        for move in moves:
            h, w = _mask_dims(move.mask)
            center = (move.anchor[1] + w / 2, move.anchor[0] + h / 2)
            inc, pair_max = _pair_terms(lnode, move.style, center, assembly)
            max_pair = max(max_pair, pair_max)
            score = (assembly.pair_sum + inc) / n_next
            if score > best_score:
                best_move, best_score, best_inc = move, score, inc
        final_max_pair = max_pair
        if max_pair < STOP_PROBABILITY:
            reason = "low_probability"
            break
        apply(best_move, best_inc)
        steps += 1
    else:
        reason = "no_candidates"
    pruned = _prune_unsatisfied(assembly, lnode)
    chunk = LevelChunk(assembly.grid.copy(), 0, f"generated:{lnode.id}")
    return GenerationResult(chunk, assembly, reason, final_max_pair, steps, pruned)


def generate_chunk(
    lnode: LNode,
    width: int | None = None,
    height: int | None = None,
    seed: int = 0,
    top_p: int = DEFAULT_TOP_P,
    sample_geometry: bool = False,
) -> LevelChunk:
    return generate(lnode, width, height, seed, top_p, sample_geometry).chunk


def chunk_seeds(seed: int, n: int) -> list[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]


def generate_level(
    lnode_sequence: Sequence[LNode],
    width_per_chunk: int | None = None,
    height: int | None = None,
    seed: int = 0,
    top_p: int = DEFAULT_TOP_P,
    level_id: str = "generated",
) -> Level:
    """Concatenate one generated chunk per LNode, left to right (no seam repair)."""
    if not lnode_sequence:
        raise ModelError("generate_level needs at least one LNode")
    seeds = chunk_seeds(seed, len(lnode_sequence))
    parts = [generate_chunk(ln, width_per_chunk, height, s, top_p).grid for ln, s in zip(lnode_sequence, seeds)]
    heights = {p.shape[0] for p in parts}
    if len(heights) != 1:
        raise ModelError(f"generated chunks disagree on height: {sorted(heights)}")
    return Level(level_id, np.hstack(parts))


def explain_sequence(level: Level, models: Sequence[LNode], chunk_width: int) -> list[tuple[int, str, float]]:
    """Best-explaining LNode for every uniform chunk of ``level``."""
    if not models:
        raise ModelError("explain_sequence needs at least one model")
    out = []
    for i, chunk in enumerate(segment_chunks(level, chunk_width, chunk_width)):
        lnode, score = best_model(chunk, models)
        out.append((i, lnode.id, score))
    return out
