"""Versioned JSON documents for model sets and score distributions.

Model file layout (``format: levelblend-models``)::

    {
      "format": "levelblend-models", "version": 1,
      "run": {...},                      # command, seed and config of the producing run
      "legend": "<legend file text>",
      "categorization": {"k": 3, "curve": {"f": {...}, "S": {...}}, ...} | null,
      "lnodes": [
        {"id": "0", "tag": "overworld", "chunk_shape": [14, 16],
         "styles": [{"id": "0/001.00", "sprite_type": 1,
                     "geometry_pool": [[[[0, 0], [0, 1]], 5], ...],
                     "chunk_ids": [0, 2], "medoid_mask": [[0, 0], [0, 1]],
                     "medoid_relations": [[8 floats], ...],
                     "placements": [[pool_index, top, left], ...]}],
         "count_vectors": [{"source_chunk": 0, "counts": {"1": 17}}],
         "cond_counts": {"<s2>": [["<s1>", dx, dy, n], ...]},
         "pair_stats": [["<s1>", "<s2>", n, [8 floats]], ...],
         "cooccur": [["<s1>", "<s2>", p], ...]}   # derived from chunk_ids; not read back
      ]
    }

Documents are written with sorted keys so identical inputs give identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .clustering import Categorization
from .corpus import TileLegend, parse_legend
from .errors import FormatVersionError, ModelError
from .evaluation import ScoreDistribution
from .model import CountVector, LNode, Style

MODEL_FORMAT = "levelblend-models"
SCORE_FORMAT = "levelblend-scores"
VERSION = 1


def _cells(mask) -> list[list[int]]:
    return [list(c) for c in sorted(mask)]


def _mask(cells) -> frozenset:
    return frozenset((int(r), int(c)) for r, c in cells)


def style_to_dict(style: Style) -> dict[str, Any]:
    pool_index = {mask: i for i, (mask, _) in enumerate(style.geometry_pool)}
    return {
        "id": style.id,
        "sprite_type": style.sprite_type,
        "geometry_pool": [[_cells(mask), n] for mask, n in style.geometry_pool],
        "chunk_ids": sorted(style.chunk_ids),
        "medoid_mask": _cells(style.medoid_mask),
        "medoid_relations": np.asarray(style.medoid_relations, dtype=float).tolist(),
        "placements": [[pool_index[mask], int(top), int(left)] for mask, (top, left) in style.placements],
    }


def style_from_dict(d: dict[str, Any]) -> Style:
    pool = tuple((_mask(cells), int(n)) for cells, n in d["geometry_pool"])
    relations = np.array(d["medoid_relations"], dtype=float).reshape(-1, 8)
    placements = tuple((pool[i][0], (int(top), int(left))) for i, top, left in d["placements"])
    return Style(
        d["id"], int(d["sprite_type"]), pool, frozenset(int(c) for c in d["chunk_ids"]),
        _mask(d["medoid_mask"]), relations, placements,
    )


def lnode_to_dict(lnode: LNode) -> dict[str, Any]:
    return {
        "id": lnode.id,
        "tag": lnode.tag,
        "chunk_shape": list(lnode.chunk_shape),
        "styles": [style_to_dict(s) for s in lnode.styles],
        "count_vectors": [
            {"source_chunk": cv.source_chunk, "counts": {str(t): n for t, n in sorted(cv.counts.items())}}
            for cv in lnode.count_vectors
        ],
        "cond_counts": {
            s2: [[s1, rel[0], rel[1], n] for (s1, rel), n in sorted(row.items())]
            for s2, row in sorted(lnode.cond_counts.items())
        },
        "pair_stats": [
            [a, b, n, np.asarray(total, dtype=float).tolist()] for (a, b), (n, total) in sorted(lnode.pair_stats.items())
        ],
        "cooccur": [[a, b, p] for (a, b), p in sorted(lnode.cooccur.items())],
    }


def lnode_from_dict(d: dict[str, Any]) -> LNode:
    try:
        return LNode(
            d["id"],
            tuple(style_from_dict(s) for s in d["styles"]),
            tuple(
                CountVector({int(t): int(n) for t, n in cv["counts"].items()}, int(cv["source_chunk"]))
                for cv in d["count_vectors"]
            ),
            {
                s2: {(s1, (int(dx), int(dy))): int(n) for s1, dx, dy, n in rows}
                for s2, rows in d["cond_counts"].items()
            },
            {(a, b): (int(n), np.array(total, dtype=float)) for a, b, n, total in d["pair_stats"]},
            tuple(int(v) for v in d["chunk_shape"]),
            d.get("tag"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed LNode record: {exc}") from None


def _header(fmt: str, run: dict | None) -> dict[str, Any]:
    return {"format": fmt, "version": VERSION, "run": run or {}}


def _check_header(doc: dict, fmt: str, source: str) -> None:
    if not isinstance(doc, dict) or doc.get("format") != fmt:
        raise FormatVersionError(f"{source}: not a {fmt} document")
    if doc.get("version") != VERSION:
        raise FormatVersionError(f"{source}: unsupported {fmt} version {doc.get('version')!r} (expected {VERSION})")


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def models_to_document(
    lnodes: Sequence[LNode],
    legend: TileLegend | None = None,
    categorization: Categorization | None = None,
    run: dict | None = None,
) -> dict[str, Any]:
    doc = _header(MODEL_FORMAT, run)
    doc["legend"] = legend.to_text() if legend is not None else None
    doc["categorization"] = None
    if categorization is not None:
        doc["categorization"] = {
            "k": categorization.k,
            "curve": categorization.curve.to_dict(),
            "reclustered": {k: v.to_dict() for k, v in categorization.reclustered.items()},
            "categories": {c.id: len(c.chunks) for c in categorization.categories},
        }
    doc["lnodes"] = [lnode_to_dict(ln) for ln in lnodes]
    return doc


class ModelSet:
    """A loaded model file."""

    def __init__(self, lnodes: list[LNode], legend: TileLegend | None, document: dict):
        self.lnodes = lnodes
        self.legend = legend
        self.document = document

    def by_id(self, lnode_id: str) -> LNode:
        for ln in self.lnodes:
            if ln.id == lnode_id:
                return ln
        raise ModelError(f"no LNode {lnode_id!r} in model set")


def models_from_document(doc: dict, source: str = "<document>") -> ModelSet:
    _check_header(doc, MODEL_FORMAT, source)
    legend = parse_legend(doc["legend"]) if doc.get("legend") else None
    return ModelSet([lnode_from_dict(d) for d in doc["lnodes"]], legend, doc)


def save_models(path: str | Path, lnodes: Sequence[LNode], legend=None, categorization=None, run=None) -> None:
    Path(path).write_text(dumps(models_to_document(lnodes, legend, categorization, run)), encoding="utf-8")


def load_models(path: str | Path) -> ModelSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatVersionError(f"{path}: not valid JSON ({exc})") from None
    return models_from_document(doc, str(path))


def scores_to_document(dist: ScoreDistribution, chunk_width: int, run: dict | None = None) -> dict[str, Any]:
    doc = _header(SCORE_FORMAT, run)
    doc.update(
        {
            "level": dist.level_id,
            "model_set": dist.model_set_id,
            "chunk_width": chunk_width,
            "chunks": [
                {"index": i, "score": s, "lnode": ln}
                for i, s, ln in zip(dist.chunk_indices, dist.scores, dist.best_lnodes)
            ],
            "median": dist.median,
            "mean": dist.mean,
        }
    )
    return doc


def load_scores(path: str | Path) -> ScoreDistribution:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatVersionError(f"{path}: not valid JSON ({exc})") from None
    _check_header(doc, SCORE_FORMAT, str(path))
    chunks = doc["chunks"]
    return ScoreDistribution(
        tuple(float(c["score"]) for c in chunks),
        doc["level"],
        doc.get("model_set", "models"),
        tuple(int(c["index"]) for c in chunks),
        tuple(c.get("lnode") for c in chunks),
    )
