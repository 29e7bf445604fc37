"""Exception hierarchy.

``LevelBlendError`` subclasses signal bad user input (exit code 1 from the
CLI); ``InvariantError`` signals an internal consistency failure (exit 2).
"""


class LevelBlendError(Exception):
    """Base class for user-facing errors."""


class LegendError(LevelBlendError):
    pass


class LevelParseError(LevelBlendError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        if row is not None:
            message = f"{message} (row {row}, col {col})"
        super().__init__(message)


class ChunkError(LevelBlendError):
    pass


class ClusteringError(LevelBlendError):
    pass


class ModelError(LevelBlendError):
    pass


class BlendError(LevelBlendError):
    pass


class StatsError(LevelBlendError):
    pass


class FormatVersionError(LevelBlendError):
    pass


class InvariantError(RuntimeError):
    """An internal invariant was violated."""
