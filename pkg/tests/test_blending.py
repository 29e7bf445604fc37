import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import toy
from levelblend.blending import (
    DegenerateBlendWarning,
    SEdge,
    StyleMapping,
    _type_mapping,
    assignable_styles,
    auto_blend,
    blend_lnode,
    blend_pair,
    build_sgraph,
    derive_style_mappings,
    edge_distance,
    full_blend,
    map_edges,
    theta_value,
    to_dot,
)
from levelblend.corpus import Level, concat_levels, relabel_level, segment_chunks
from levelblend.errors import BlendError
from levelblend.evaluation import score_level
from levelblend.model import LNode, Style, check_lnode, cond_prob
from levelblend.scoring import score_chunk

DOT = frozenset({(0, 0)})


def style(sid, t, chunks):
    return Style(sid, t, ((DOT, 1),), frozenset(chunks), DOT, np.zeros((0, 8)), ((DOT, (0, 0)),))


def hand_lnode(chunk_sets, features, lid="h"):
    styles = tuple(style(sid, i + 1, ch) for i, (sid, ch) in enumerate(sorted(chunk_sets.items())))
    pair_stats = {k: (1, np.asarray(v, dtype=float)) for k, v in features.items()}
    return LNode(lid, styles, (), {}, pair_stats, (14, 16))


def test_two_styles_threshold():
    ln = hand_lnode({"a": range(10), "b": range(3, 13)}, {("a", "b"): [1] * 8})
    g = build_sgraph(ln)
    assert g.is_connected() and len(g.edges) == 1
    assert g.edges[0].probability == pytest.approx(0.7)
    assert g.thresholds["a"] == pytest.approx(0.7) and g.thresholds["b"] == 1.0
    assert g.trigger == "a" and g.iterations == 6


def test_single_style_graph():
    g = build_sgraph(hand_lnode({"a": [0]}, {}))
    assert g.edges == () and g.is_connected()


def test_star_hub_degree():
    leaves = {f"l{i}": [i] for i in range(5)}
    ln = hand_lnode({"hub": range(5), **leaves}, {("hub", f"l{i}"): [i + 1, 0] * 4 for i in range(5)})
    g = build_sgraph(ln)
    assert g.is_connected() and g.degree("hub") == 5
    assert all(g.degree(f"l{i}") == 1 for i in range(5))


def test_empty_lnode_graph():
    with pytest.raises(BlendError):
        build_sgraph(LNode("e", (), (), {}, {}, (4, 4)))


def test_disconnected_when_no_spanning_relations():
    g = build_sgraph(hand_lnode({"a": [0], "b": [1]}, {}))
    assert not g.is_connected() and g.edges == ()


def E(p, f, ends=("x", "y")):
    return SEdge(ends, p, np.asarray(f, dtype=float))


def test_edge_distance_examples():
    f = [1, 2, 0, 0, 1, 2, 0, 0]
    assert edge_distance(E(0.6, f), E(0.6, f)) == pytest.approx(0, abs=1e-12)
    assert edge_distance(E(0.5, f), E(0.5, -np.asarray(f))) == pytest.approx(0.5)
    assert edge_distance(E(0.9, f), E(0.5, f)) == pytest.approx(0.2)
    assert edge_distance(E(0.5, [0] * 8), E(0.5, f)) == pytest.approx(0.25)


vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=8, max_size=8).filter(lambda v: any(abs(x) > 1e-3 for x in v))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), vec, st.floats(0, 1), vec)
def test_edge_distance_symmetric_and_bounded(p1, f1, p2, f2):
    a, b = E(p1, f1), E(p2, f2)
    d = edge_distance(a, b)
    assert d == pytest.approx(edge_distance(b, a)) and 0 <= d <= 1 + 1e-12
    assert edge_distance(a, a) == pytest.approx(0, abs=1e-9)


def test_map_edges_identical_graphs(models):
    g = build_sgraph(models[2])
    for m in map_edges(g, g):
        assert m.distance == pytest.approx(0, abs=1e-12)
        assert set(m.target_edge.endpoints) == set(m.source_edge.endpoints) or m.distance == 0


def test_map_edges_single_target_edge(models):
    src = build_sgraph(models[2])
    tgt = build_sgraph(hand_lnode({"a": range(4), "b": range(4)}, {("a", "b"): [1] * 8}))
    maps = map_edges(src, tgt)
    assert len(maps) == len(src.edges)
    assert all(set(m.target_edge.endpoints) == {"a", "b"} for m in maps)
    with pytest.raises(BlendError):
        map_edges(src, build_sgraph(hand_lnode({"a": [0]}, {})))


def _rename(sid):
    head, tail = sid.split("/")
    t, k = tail.split(".")
    return f"Cr/{toy.RELABEL.get(int(t), int(t)):03d}.{k}"


def test_relabel_edges_and_evidence(relabel_pair):
    a, b, _, _ = relabel_pair
    ga, gb = build_sgraph(a), build_sgraph(b)
    maps = map_edges(ga, gb)
    ground_goomba = [
        m for m in maps
        if {a.style(s).sprite_type for s in m.source_edge.endpoints} == {toy.GROUND, toy.GOOMBA}
    ]
    assert ground_goomba
    for m in ground_goomba:
        assert {b.style(s).sprite_type for s in m.target_edge.endpoints} == {toy.SEABLOCK, toy.SQUID}
    for sm in derive_style_mappings(maps):
        assert sm.target == _rename(sm.source)
        assert sm.evidence == ga.degree(sm.source)


def test_identity_mappings(models):
    g = build_sgraph(models[1])
    assert all(m.source == m.target for m in derive_style_mappings(map_edges(g, g)))


def test_target_set_keeps_goomba(relabel_pair):
    a, b, _, _ = relabel_pair
    no_squid = {s.id for s in b.styles if s.sprite_type != toy.SQUID}
    maps = derive_style_mappings(map_edges(build_sgraph(a), build_sgraph(b)), no_squid)
    for m in maps:
        t = a.style(m.source).sprite_type
        if t == toy.GOOMBA:
            assert m.target == m.source and m.evidence == 0
        elif t == toy.GROUND:
            assert b.style(m.target).sprite_type == toy.SEABLOCK and m.evidence > 0


def test_identity_blend_preserves_cond_prob(models):
    for ln in models:
        blended = blend_lnode(ln, ln, [StyleMapping(s, s, 1) for s in ln.style_ids])
        for s2, row in ln.cond_table.items():
            for (s1, rel), p in row.items():
                assert cond_prob(blended, s1, rel, s2) == pytest.approx(p, abs=1e-9)
        assert blended.cond_table.keys() == ln.cond_table.keys()


def test_blend_relation_carries_over(relabel_pair):
    a, b, _, _ = relabel_pair
    pb = blend_pair(a, b)
    mapping = {m.source: m.target for m in pb.style_mappings}
    for s2, row in a.cond_table.items():
        for (s1, rel), p in row.items():
            assert cond_prob(pb.lnode, mapping[s1], rel, mapping[s2]) == p
    assert pb.lnode.id == "C+Cr"
    seablock = pb.lnode.styles_of_type(toy.SEABLOCK)
    assert seablock and not pb.lnode.styles_of_type(toy.GROUND)
    assert all(cv.counts.get(toy.GROUND, 0) == 0 for cv in pb.lnode.count_vectors)
    check_lnode(pb.lnode)


def test_blend_unknown_target(models):
    with pytest.raises(BlendError):
        blend_lnode(models[0], models[1], [StyleMapping(models[0].style_ids[0], "nope", 1)])


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_blend_keeps_rows_normalised(data):
    a, b = _pair()
    targets = b.style_ids
    mappings = [
        StyleMapping(s, data.draw(st.sampled_from(targets + [s])), 1) for s in a.style_ids
    ]
    out = blend_lnode(a, b, mappings)
    check_lnode(out)
    assert sum(sum(r.values()) for r in out.cond_counts.values()) == sum(sum(r.values()) for r in a.cond_counts.values())


_PAIR = []


def _pair():
    if not _PAIR:
        from levelblend.model import learn_corpus

        ms = learn_corpus(toy.toy_levels(), toy.legend(), seed=0).lnodes
        _PAIR.extend([ms[0], ms[2]])
    return _PAIR


def test_relabel_blend_scores_exact(relabel_pair):
    a, b, ca, cb = relabel_pair
    mix = concat_levels([c.grid for c in ca + cb], "mix")
    out = auto_blend([a, b], mix, 16)
    ab = next(m for m in out if m.id == "C+Cr")
    for orig, renamed in zip(ca, cb):
        assert score_chunk(renamed, ab) == score_chunk(orig, a)


def test_auto_blend_degenerate(models, learned):
    cat = learned.categorization.categories[0]
    level = Level("one", np.hstack([c.grid for c in cat.chunks]))
    with pytest.warns(DegenerateBlendWarning):
        out = auto_blend(models, level, 16)
    assert [m.id for m in out] == [m.id for m in models]
    with pytest.raises(BlendError):
        auto_blend(models[:1], level, 16)


def test_auto_blend_two_categories(models, learned):
    cats = learned.categorization.categories
    level = Level("two", np.hstack([cats[0].chunks[0].grid, cats[1].chunks[0].grid]))
    out = auto_blend(models, level, 16)
    blends = [m.id for m in out[len(models):]]
    assert blends == [f"{cats[0].id}+{cats[1].id}", f"{cats[1].id}+{cats[0].id}"]


def test_auto_blend_mixture_mostly_better(relabel_pair):
    a, b, ca, _ = relabel_pair
    partial = [relabel_level(Level(f"o{i}", c.grid), {toy.GROUND: toy.SEABLOCK}) for i, c in enumerate(ca)]
    mix = concat_levels([c.grid for c in ca[:3]] + [p.grid for p in partial], "mix")
    out = auto_blend([a, b], mix, 16)
    blended = score_level(mix, out, 16).scores
    unblended = score_level(mix, [a, b], 16).scores
    assert sum(x >= y for x, y in zip(blended, unblended)) >= 0.8 * len(blended)


def tagged(models, tags):
    out = []
    for m, tag in zip(models, tags):
        out.append(LNode(m.id, m.styles, m.count_vectors, m.cond_counts, m.pair_stats, m.chunk_shape, tag))
    return out


def test_full_blend_counts(models, levels):
    one_each = tagged(models[:2], ["a", "b"])
    assert len(full_blend(one_each, "a", "b", levels[0], 16)) == 2 + 2
    three = tagged(models, ["a", "b", "b"])
    out = full_blend(three, "a", "b", levels[0], 16)
    assert len(out) - 3 == 2 * 1 * 2
    with pytest.raises(BlendError):
        full_blend(three, "a", "castle", levels[0], 16)


def test_full_blend_superset_of_auto(models, levels):
    ms = tagged(models, ["a", "b", "a"])
    tag = {m.id: m.tag for m in ms}
    auto_ids = {m.id for m in auto_blend(ms, levels[0], 16) if "+" in m.id}
    cross = {i for i in auto_ids if {tag[p] for p in i.split("+")} == {"a", "b"}}
    full_ids = {m.id for m in full_blend(ms, "a", "b", levels[0], 16)}
    assert cross <= full_ids


def test_type_mapping_prefers_evidence(relabel_pair):
    a, b, _, _ = relabel_pair
    pb = blend_pair(a, b)
    tm = _type_mapping(a, b, pb.style_mappings)
    assert tm[toy.GROUND] == toy.SEABLOCK and tm[toy.GOOMBA] == toy.SQUID


def test_assignable_styles(relabel_pair, levels):
    a, b, ca, _ = relabel_pair
    lv = Level("o", np.hstack([c.grid for c in ca]))
    assert assignable_styles(lv, a, 16) <= set(a.style_ids)
    assert assignable_styles(lv, b, 16) <= {s.id for s in b.styles if s.sprite_type not in (toy.SEABLOCK, toy.SQUID)}


def test_dot_export(models, legend):
    ln = models[0]
    dot = to_dot(build_sgraph(ln), ln, legend)
    assert dot.startswith(f'graph "{ln.id}" {{')
    assert f'[label="ground:{ln.styles_of_type(toy.GROUND)[0].id}"]' in dot
    assert dot.count(" -- ") == len(build_sgraph(ln).edges)
    assert '[label="1.000"]' in dot


def test_theta_steps():
    assert theta_value(0) == 1.0 and theta_value(6) == 0.7 and theta_value(20) == 0.0
