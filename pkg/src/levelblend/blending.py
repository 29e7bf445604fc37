"""Analogical blending of LNodes through their S-structure graphs.

Pipeline for one (source, target) pair:

1. :func:`build_sgraph` abstracts each LNode into styles joined by their most
   probable relations, using per-style thresholds lowered until the graph is
   connected.
2. :func:`map_edges` matches every source edge to its closest target edge.
3. :func:`derive_style_mappings` turns edge matches into style-to-style votes
   and keeps the best-supported target for every source style.
4. :func:`blend_lnode` relabels the source LNode through those mappings.
"""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Level, TileLegend, segment_chunks
from .errors import BlendError
from .generation import explain_sequence
from .model import CountVector, LNode, Style, assign_style, chunk_observations

THETA_STEP = 0.05
_THETA_STEPS = round(1 / THETA_STEP)
_EPS = 1e-12


class DegenerateBlendWarning(UserWarning):
    """Fewer than two distinct LNodes explain the blend target."""


@dataclass(frozen=True, eq=False)
class SEdge:
    endpoints: tuple[str, str]
    probability: float
    feature: np.ndarray  # mean 8-d cardinal vector from endpoints[0] to endpoints[1]

    def reversed(self) -> "SEdge":
        return SEdge((self.endpoints[1], self.endpoints[0]), self.probability, -self.feature)

    @property
    def key(self) -> tuple[str, str]:
        a, b = self.endpoints
        return (a, b) if a <= b else (b, a)


def _connected(nodes: Sequence[str], edges: Iterable[SEdge]) -> bool:
    if len(nodes) <= 1:
        return True
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    groups = len(nodes)
    for e in edges:
        a, b = find(e.endpoints[0]), find(e.endpoints[1])
        if a != b:
            parent[a] = b
            groups -= 1
    return groups == 1


def theta_value(steps: int) -> float:
    return (_THETA_STEPS - steps) / _THETA_STEPS


@dataclass(eq=False)
class SStructureGraph:
    lnode_id: str
    nodes: tuple[str, ...]
    edges: tuple[SEdge, ...]
    thresholds: dict[str, float]
    candidates: tuple[SEdge, ...] = ()
    trigger: str | None = None  # node lowered in the final iteration
    last_admitted: tuple[SEdge, ...] = ()
    iterations: int = 0

    def is_connected(self, edges: Iterable[SEdge] | None = None) -> bool:
        return _connected(self.nodes, self.edges if edges is None else edges)

    def admitted_under(self, thresholds: dict[str, float]) -> list[SEdge]:
        """Candidate edges at or above the threshold of either endpoint."""
        return [
            e for e in self.candidates
            if e.probability >= thresholds[e.endpoints[0]] - _EPS or e.probability >= thresholds[e.endpoints[1]] - _EPS
        ]

    def degree(self, node: str) -> int:
        return sum(node in e.endpoints for e in self.edges)


def candidate_edges(lnode: LNode) -> list[SEdge]:
    out = []
    ids = lnode.style_ids
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            p = max(lnode.cooccur.get((a, b), 0.0), lnode.cooccur.get((b, a), 0.0))
            if p <= 0.0:
                continue
            feature = lnode.edge_feature(a, b)
            if feature is None:
                back = lnode.edge_feature(b, a)
                if back is None:
                    continue
                feature = -back
            out.append(SEdge((a, b), p, np.asarray(feature, dtype=float)))
    return out


def build_sgraph(lnode: LNode) -> SStructureGraph:
    if not lnode.styles:
        raise BlendError(f"LNode {lnode.id!r} has no styles")
    nodes = tuple(lnode.style_ids)
    cands = candidate_edges(lnode)
    incident: dict[str, list[SEdge]] = defaultdict(list)
    for e in cands:
        incident[e.endpoints[0]].append(e)
        incident[e.endpoints[1]].append(e)
    steps = {n: 0 for n in nodes}
    admitted: dict[tuple[str, str], SEdge] = {e.endpoints: e for e in cands if e.probability >= 1.0 - _EPS}
    degree = Counter()
    for a, b in admitted:
        degree[a] += 1
        degree[b] += 1
    trigger, last, iterations = None, (), 0
    while not _connected(nodes, admitted.values()):
        active = [n for n in nodes if steps[n] < _THETA_STEPS]
        if not active:
            break
        node = min(active, key=lambda n: (degree[n], n))
        steps[node] += 1
        theta = theta_value(steps[node])
        new = [e for e in incident[node] if e.endpoints not in admitted and e.probability >= theta - _EPS]
        for e in new:
            admitted[e.endpoints] = e
            degree[e.endpoints[0]] += 1
            degree[e.endpoints[1]] += 1
        trigger, last = node, tuple(new)
        iterations += 1
    edges = tuple(sorted(admitted.values(), key=lambda e: e.endpoints))
    return SStructureGraph(
        lnode.id, nodes, edges, {n: theta_value(steps[n]) for n in nodes}, tuple(cands), trigger, last, iterations
    )


def edge_distance(e1: SEdge, e2: SEdge) -> float:
    """Mean of the probability gap and the cosine distance rescaled to [0, 1].

    A zero feature vector carries no direction; its direction term is 0.5,
    the value for orthogonal vectors.
    """
    term_prob = abs(e1.probability - e2.probability)
    n1, n2 = np.linalg.norm(e1.feature), np.linalg.norm(e2.feature)
    if n1 == 0.0 or n2 == 0.0:
        term_dir = 0.5
    else:
        cos = float(np.dot(e1.feature, e2.feature) / (n1 * n2))
        term_dir = (1.0 - max(-1.0, min(1.0, cos))) / 2.0
    return (term_prob + term_dir) / 2.0


@dataclass(frozen=True, eq=False)
class EdgeMapping:
    source_edge: SEdge
    target_edge: SEdge  # oriented so endpoints pair up positionally with the source edge
    distance: float
    # every oriented target edge at the same minimal distance, target_edge first
    ties: tuple[SEdge, ...] = ()

    @property
    def alternatives(self) -> tuple[SEdge, ...]:
        return self.ties or (self.target_edge,)


def map_edges(source: SStructureGraph, target: SStructureGraph) -> list[EdgeMapping]:
    """Closest target edge for every source edge, trying both target orientations."""
    if not target.edges:
        raise BlendError(f"S-structure graph of {target.lnode_id!r} has no edges")
    ordered = sorted(target.edges, key=lambda e: e.key)
    out = []
    for se in source.edges:
        scored = []
        for te in ordered:
            for flipped, oriented in ((False, te), (True, te.reversed())):
                scored.append(((edge_distance(se, oriented), te.key, flipped), oriented))
        scored.sort(key=lambda item: item[0])
        best_d = scored[0][0][0]
        ties = tuple(o for rank, o in scored if rank[0] <= best_d + _EPS)
        out.append(EdgeMapping(se, ties[0], best_d, ties))
    return out


@dataclass(frozen=True)
class StyleMapping:
    source: str
    target: str
    evidence: int  # 0 marks the identity fallback


def style_votes(edge_mappings: Sequence[EdgeMapping]) -> Counter:
    """Per-pair evidence after resolving every edge mapping to one endpoint pairing.

    An edge mapping supports (a->c, b->d) or (a->d, b->c) for each of its
    equally close target edges. A preliminary tally spreads one vote over
    all of these; each mapping then keeps the pairing with the most
    preliminary support, falling back to the feature-matched one on ties.
    """
    prelim: Counter = Counter()
    for m in edge_mappings:
        a, b = m.source_edge.endpoints
        w = 1.0 / len(m.alternatives)
        for alt in m.alternatives:
            c, d = alt.endpoints
            prelim.update({(a, c): w, (b, d): w, (a, d): w, (b, c): w})
    votes: Counter = Counter()
    for m in edge_mappings:
        a, b = m.source_edge.endpoints
        best, best_support = None, -1.0
        for alt in m.alternatives:
            c, d = alt.endpoints
            for pairing in (((a, c), (b, d)), ((a, d), (b, c))):
                support = prelim[pairing[0]] + prelim[pairing[1]]
                if support > best_support + _EPS:
                    best, best_support = pairing, support
        votes.update(best)
    return votes


def derive_style_mappings(
    edge_mappings: Sequence[EdgeMapping],
    target_set: set[str] | frozenset[str] | None = None,
) -> list[StyleMapping]:
    """Best-supported target per source style, filtered by an optional blend target set.

    A source style keeps itself when its best target falls outside
    ``target_set``, or when the source style itself belongs to ``target_set``.
    """
    votes = style_votes(edge_mappings)
    by_source: dict[str, list[tuple[str, int]]] = defaultdict(list)
    for (src, tgt), n in votes.items():
        by_source[src].append((tgt, n))
    sources = sorted({s for m in edge_mappings for s in m.source_edge.endpoints})
    out = []
    for src in sources:
        tgt, n = sorted(by_source[src], key=lambda tn: (-tn[1], tn[0]))[0]
        if target_set is not None and (tgt not in target_set or src in target_set):
            out.append(StyleMapping(src, src, 0))
        else:
            out.append(StyleMapping(src, tgt, n))
    return out


def _type_mapping(source: LNode, target: LNode, mappings: Sequence[StyleMapping]) -> dict[int, int]:
    votes: dict[int, Counter] = defaultdict(Counter)
    for m in mappings:
        if m.evidence <= 0 or m.source == m.target:
            continue
        votes[source.style(m.source).sprite_type][target.style(m.target).sprite_type] += m.evidence
    out = {}
    for src_type, tally in votes.items():
        out[src_type] = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    return out


def blend_lnode(source: LNode, target: LNode, mappings: Sequence[StyleMapping]) -> LNode:
    """Relabel ``source`` through ``mappings``; mapped styles take the target's geometry and type."""
    mapping: dict[str, str] = {}
    for m in mappings:
        if m.source in mapping and mapping[m.source] != m.target:
            raise BlendError(f"source style {m.source!r} mapped twice")
        source.style(m.source)
        if m.target != m.source and not target.has_style(m.target):
            raise BlendError(f"mapping targets unknown style {m.target!r} of {target.id!r}")
        mapping[m.source] = m.target
    relabel = {s.id: mapping.get(s.id, s.id) for s in source.styles}

    chunk_ids: dict[str, set] = defaultdict(set)
    from_target: set[str] = set()
    for s in source.styles:
        new = relabel[s.id]
        chunk_ids[new] |= set(s.chunk_ids)
        if new != s.id:
            from_target.add(new)
    styles = []
    for new in sorted(chunk_ids):
        base: Style = target.style(new) if new in from_target else source.style(new)
        styles.append(base.relabeled(new, chunk_ids[new]))

    cond_counts: dict[str, Counter] = defaultdict(Counter)
    for s2, row in source.cond_counts.items():
        for (s1, rel), n in row.items():
            cond_counts[relabel[s2]][(relabel[s1], rel)] += n
    pair_stats: dict[tuple[str, str], tuple[int, np.ndarray]] = {}
    for (a, b), (n, total) in source.pair_stats.items():
        key = (relabel[a], relabel[b])
        if key in pair_stats:
            n0, t0 = pair_stats[key]
            pair_stats[key] = (n0 + n, t0 + total)
        else:
            pair_stats[key] = (n, np.array(total, dtype=float))

    type_map = _type_mapping(source, target, mappings)
    count_vectors = []
    for cv in source.count_vectors:
        counts: Counter = Counter()
        for t, n in cv.counts.items():
            counts[type_map.get(t, t)] += n
        count_vectors.append(CountVector(dict(sorted(counts.items())), cv.source_chunk))

    tag = f"{source.tag}+{target.tag}" if source.tag and target.tag else (source.tag or target.tag)
    return LNode(
        f"{source.id}+{target.id}",
        tuple(styles),
        tuple(count_vectors),
        {s2: dict(row) for s2, row in cond_counts.items()},
        pair_stats,
        source.chunk_shape,
        tag,
    )


def assignable_styles(level: Level, lnode: LNode, chunk_width: int) -> set[str]:
    """Styles of ``lnode`` that some shape of ``level`` is assigned to."""
    out = set()
    for chunk in segment_chunks(level, chunk_width, chunk_width):
        for obs in chunk_observations(chunk):
            sid = assign_style(lnode, obs)
            if sid is not None:
                out.add(sid)
    return out


@dataclass(eq=False)
class PairBlend:
    lnode: LNode
    edge_mappings: list[EdgeMapping]
    style_mappings: list[StyleMapping]
    target_set: set[str] | None = None


def blend_pair(
    source: LNode,
    target: LNode,
    target_set: set[str] | None = None,
    graphs: dict[str, SStructureGraph] | None = None,
) -> PairBlend:
    graphs = {} if graphs is None else graphs
    for ln in (source, target):
        if ln.id not in graphs:
            graphs[ln.id] = build_sgraph(ln)
    src_graph, tgt_graph = graphs[source.id], graphs[target.id]
    if not tgt_graph.edges or not src_graph.edges:
        edge_maps: list[EdgeMapping] = []
    else:
        edge_maps = map_edges(src_graph, tgt_graph)
    style_maps = derive_style_mappings(edge_maps, target_set)
    return PairBlend(blend_lnode(source, target, style_maps), edge_maps, style_maps, target_set)


def auto_blend(
    models: Sequence[LNode],
    blend_target_level: Level,
    chunk_width: int,
    legend: TileLegend | None = None,
) -> list[LNode]:
    """Blend every ordered pair of the LNodes that best explain the target level's chunks.

    Returns the input models followed by the blends, in (source, target) id order.
    """
    if len(models) < 2:
        raise BlendError("auto_blend needs at least 2 models")
    explained = explain_sequence(blend_target_level, models, chunk_width)
    selected_ids = sorted({lid for _, lid, _ in explained})
    if len(selected_ids) < 2:
        warnings.warn(
            f"only {len(selected_ids)} LNode explains {blend_target_level.id!r}; no blends produced",
            DegenerateBlendWarning,
            stacklevel=2,
        )
        return list(models)
    by_id = {m.id: m for m in models}
    selected = [by_id[i] for i in selected_ids]
    return list(models) + _blend_all(
        [(a, b) for a in selected for b in selected if a is not b], blend_target_level, chunk_width
    )


def _blend_all(pairs: Sequence[tuple[LNode, LNode]], level: Level, chunk_width: int) -> list[LNode]:
    graphs: dict[str, SStructureGraph] = {}
    target_sets: dict[str, set[str]] = {}
    out = []
    for source, target in pairs:
        if target.id not in target_sets:
            target_sets[target.id] = assignable_styles(level, target, chunk_width)
        out.append(blend_pair(source, target, target_sets[target.id], graphs).lnode)
    return out


def full_blend(
    tagged_models: Sequence[LNode],
    type_a: str,
    type_b: str,
    target_level: Level,
    chunk_width: int,
    legend: TileLegend | None = None,
) -> list[LNode]:
    """Blend every cross-tag ordered pair; returns the input models followed by the 2*m*n blends."""
    group_a = sorted((m for m in tagged_models if m.tag == type_a), key=lambda m: m.id)
    group_b = sorted((m for m in tagged_models if m.tag == type_b), key=lambda m: m.id)
    for tag, group in ((type_a, group_a), (type_b, group_b)):
        if not group:
            raise BlendError(f"no LNode tagged {tag!r}")
    pairs = [(a, b) for a in group_a for b in group_b] + [(b, a) for b in group_b for a in group_a]
    pairs.sort(key=lambda p: (p[0].id, p[1].id))
    return list(tagged_models) + _blend_all(pairs, target_level, chunk_width)


def to_dot(graph: SStructureGraph, lnode: LNode | None = None, legend: TileLegend | None = None) -> str:
    """Graphviz rendering; nodes labelled ``type:style``, edges with their probability."""

    def label(sid: str) -> str:
        if lnode is None:
            return sid
        t = lnode.style(sid).sprite_type
        name = legend.name_of(t) if legend is not None and t in legend else str(t)
        return f"{name}:{sid}"

    lines = [f'graph "{graph.lnode_id}" {{']
    for n in graph.nodes:
        lines.append(f'  "{n}" [label="{label(n)}"];')
    for e in graph.edges:
        a, b = e.endpoints
        lines.append(f'  "{a}" -- "{b}" [label="{e.probability:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
