"""Tile corpus ingestion: legends, levels, chunk segmentation and chunk features.

Legend file, one entry per line (tab separated)::

    -	0	empty
    X	1	ground
    empty	0

Level file: one glyph per tile, rows top to bottom, optionally preceded by
header lines ``#tag:<level-type>``, ``#format:levelblend-level/1`` and
``#run:<json>``. Generated levels carry the format and run lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import json

import numpy as np

from .errors import ChunkError, FormatVersionError, LegendError, LevelParseError

BACKGROUND_ID = 0
DEFAULT_CHUNK_WIDTH = 16
DEFAULT_STRIDE = 16
TAG_PREFIX = "#tag:"
FORMAT_PREFIX = "#format:"
RUN_PREFIX = "#run:"
LEVEL_FORMAT = "levelblend-level/1"


@dataclass(frozen=True)
class SpriteType:
    id: int
    name: str


@dataclass(frozen=True)
class TileLegend:
    entries: Mapping[str, SpriteType]
    empty_id: int = BACKGROUND_ID

    def __post_init__(self):
        seen: dict[int, str] = {}
        for glyph, sprite in self.entries.items():
            if len(glyph) != 1:
                raise LegendError(f"glyph {glyph!r} must be a single character")
            if sprite.id in seen:
                raise LegendError(f"duplicate id {sprite.id} for glyphs {seen[sprite.id]!r} and {glyph!r}")
            seen[sprite.id] = glyph
        if self.empty_id != BACKGROUND_ID:
            raise LegendError(f"background id must be {BACKGROUND_ID}, got {self.empty_id}")
        if self.empty_id not in seen:
            raise LegendError(f"background id {self.empty_id} has no glyph")
        object.__setattr__(self, "_by_id", {s.id: (g, s) for g, s in self.entries.items()})

    @property
    def ids(self) -> list[int]:
        return sorted(self._by_id)

    def id_of(self, glyph: str) -> int:
        return self.entries[glyph].id

    def glyph_of(self, sprite_id: int) -> str:
        return self._by_id[sprite_id][0]

    def name_of(self, sprite_id: int) -> str:
        return self._by_id[sprite_id][1].name

    def id_by_name(self, name: str) -> int:
        for sprite in self.entries.values():
            if sprite.name == name:
                return sprite.id
        raise KeyError(name)

    def __contains__(self, sprite_id: int) -> bool:
        return sprite_id in self._by_id

    def __len__(self) -> int:
        return len(self.entries)

    def to_text(self) -> str:
        lines = [f"{g}\t{s.id}\t{s.name}" for g, s in sorted(self.entries.items(), key=lambda kv: kv[1].id)]
        lines.append(f"empty\t{self.empty_id}")
        return "\n".join(lines) + "\n"


def parse_legend(text: str) -> TileLegend:
    entries: dict[str, SpriteType] = {}
    empty_id = None
    ids: set[int] = set()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if parts[0] == "empty" and len(parts) == 2:
            if empty_id is not None:
                raise LegendError(f"line {lineno}: background declared twice")
            empty_id = _parse_int(parts[1], lineno)
            continue
        if len(parts) != 3:
            raise LegendError(f"line {lineno}: expected 'glyph<TAB>id<TAB>name', got {raw!r}")
        glyph, sid, name = parts
        if len(glyph) != 1:
            raise LegendError(f"line {lineno}: glyph {glyph!r} must be a single character")
        if glyph in entries:
            raise LegendError(f"line {lineno}: duplicate glyph {glyph!r}")
        sprite_id = _parse_int(sid, lineno)
        if sprite_id in ids:
            raise LegendError(f"line {lineno}: duplicate id {sprite_id}")
        ids.add(sprite_id)
        entries[glyph] = SpriteType(sprite_id, name)
    if empty_id is None:
        raise LegendError("missing background declaration ('empty<TAB>id')")
    return TileLegend(entries, empty_id)


def _parse_int(value: str, lineno: int) -> int:
    try:
        out = int(value)
    except ValueError:
        raise LegendError(f"line {lineno}: id {value!r} is not an integer") from None
    if out < 0:
        raise LegendError(f"line {lineno}: id {out} is negative")
    return out


def _frozen_grid(grid) -> np.ndarray:
    arr = np.array(grid, dtype=np.int32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"grid must be a non-empty 2-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Level:
    id: str
    grid: np.ndarray
    tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen_grid(self.grid))

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def same_as(self, other: "Level") -> bool:
        return self.id == other.id and self.tag == other.tag and np.array_equal(self.grid, other.grid)


@dataclass(frozen=True, eq=False)
class LevelChunk:
    grid: np.ndarray
    origin_col: int = 0
    source_level: str = ""
    dwell_time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen_grid(self.grid))
        if self.dwell_time is not None and self.dwell_time < 0:
            raise ValueError("dwell_time must be non-negative")

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]


def parse_level(text: str, legend: TileLegend, level_id: str = "level") -> Level:
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    tag = None
    offset = 0
    while lines and lines[0].startswith((TAG_PREFIX, FORMAT_PREFIX, RUN_PREFIX)):
        head = lines.pop(0)
        offset += 1
        if head.startswith(TAG_PREFIX):
            tag = head[len(TAG_PREFIX):]
        elif head.startswith(FORMAT_PREFIX) and head[len(FORMAT_PREFIX):] != LEVEL_FORMAT:
            raise FormatVersionError(
                f"level {level_id!r}: unsupported format {head[len(FORMAT_PREFIX):]!r} (expected {LEVEL_FORMAT!r})"
            )
    if not lines:
        raise LevelParseError(f"level {level_id!r} has no rows")
    width = len(lines[0])
    rows = []
    for r, line in enumerate(lines):
        if len(line) != width:
            raise LevelParseError(
                f"level {level_id!r}: ragged row of length {len(line)}, expected {width}", r + offset, len(line)
            )
        row = []
        for c, glyph in enumerate(line):
            sprite = legend.entries.get(glyph)
            if sprite is None:
                raise LevelParseError(f"level {level_id!r}: unknown glyph {glyph!r}", r + offset, c)
            row.append(sprite.id)
        rows.append(row)
    if width == 0:
        raise LevelParseError(f"level {level_id!r} has empty rows")
    return Level(level_id, np.array(rows, dtype=np.int32), tag)


def render_grid(grid: np.ndarray, legend: TileLegend) -> str:
    lookup = {}
    out_rows = []
    for row in np.asarray(grid):
        chars = []
        for sid in row:
            sid = int(sid)
            if sid not in lookup:
                if sid not in legend:
                    raise LegendError(f"sprite id {sid} absent from legend")
                lookup[sid] = legend.glyph_of(sid)
            chars.append(lookup[sid])
        out_rows.append("".join(chars))
    return "\n".join(out_rows)


def render_level(level: Level, legend: TileLegend) -> str:
    """Inverse of :func:`parse_level` (without the trailing newline)."""
    body = render_grid(level.grid, legend)
    if level.tag is not None:
        return f"{TAG_PREFIX}{level.tag}\n{body}"
    return body


def segment_chunks(level: Level, width: int = DEFAULT_CHUNK_WIDTH, stride: int = DEFAULT_STRIDE) -> list[LevelChunk]:
    if width < 1 or stride < 1:
        raise ChunkError("chunk width and stride must be positive")
    if width > level.width:
        raise ChunkError(f"chunk width {width} exceeds level {level.id!r} width {level.width}")
    return [
        LevelChunk(level.grid[:, start:start + width], start, level.id)
        for start in range(0, level.width - width + 1, stride)
    ]


def chunk_features(chunk: LevelChunk, legend: TileLegend) -> np.ndarray:
    """Per-type cell fractions, indexed by ``legend.ids`` order; background forced to 0."""
    ids = legend.ids
    index = {sid: i for i, sid in enumerate(ids)}
    values, counts = np.unique(chunk.grid, return_counts=True)
    out = np.zeros(len(ids))
    area = chunk.grid.size
    for sid, n in zip(values.tolist(), counts.tolist()):
        if sid not in index:
            raise ChunkError(f"sprite id {sid} absent from legend")
        if sid != legend.empty_id:
            out[index[sid]] = n / area
    return out


def relabel_level(level: Level, mapping: Mapping[int, int], level_id: str | None = None, tag: str | None = None) -> Level:
    """Copy of ``level`` with sprite ids renamed through ``mapping``."""
    grid = level.grid.copy()
    for src, dst in mapping.items():
        grid[level.grid == src] = dst
    return Level(level_id or level.id, grid, level.tag if tag is None else tag)


def concat_levels(parts: Sequence[np.ndarray], level_id: str, tag: str | None = None) -> Level:
    return Level(level_id, np.hstack([np.asarray(p) for p in parts]), tag)


@dataclass
class Corpus:
    legend: TileLegend
    levels: list[Level] = field(default_factory=list)


def load_legend(path: str | Path) -> TileLegend:
    path = Path(path)
    try:
        return parse_legend(path.read_text(encoding="utf-8"))
    except LegendError as exc:
        raise LegendError(f"{path}: {exc}") from None


def load_level(path: str | Path, legend: TileLegend, level_id: str | None = None) -> Level:
    path = Path(path)
    try:
        return parse_level(path.read_text(encoding="utf-8"), legend, level_id or path.stem)
    except LevelParseError as exc:
        raise LevelParseError(f"{path}: {exc}") from None


def load_corpus(directory: str | Path) -> Corpus:
    directory = Path(directory)
    legend_path = directory / "legend.txt"
    if not legend_path.is_file():
        raise LegendError(f"{directory}: missing legend.txt")
    legend = load_legend(legend_path)
    levels = [load_level(p, legend) for p in sorted((directory / "levels").glob("*.txt"))]
    return Corpus(legend, levels)


def write_level(path: str | Path, level: Level, legend: TileLegend, run: dict | None = None) -> None:
    """Write ``level``; with ``run`` given, prefix the format and run-config header lines."""
    text = render_level(level, legend) + "\n"
    if run is not None:
        text = f"{FORMAT_PREFIX}{LEVEL_FORMAT}\n{RUN_PREFIX}{json.dumps(run, sort_keys=True)}\n" + text
    Path(path).write_text(text, encoding="utf-8")


def write_corpus(directory: str | Path, legend: TileLegend, levels: Iterable[Level]) -> None:
    directory = Path(directory)
    (directory / "levels").mkdir(parents=True, exist_ok=True)
    (directory / "legend.txt").write_text(legend.to_text(), encoding="utf-8")
    for level in levels:
        write_level(directory / "levels" / f"{level.id}.txt", level, legend)
