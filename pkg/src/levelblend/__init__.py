"""Learn, generate, blend and score tile-based platformer levels."""

from .blending import auto_blend, blend_lnode, build_sgraph, derive_style_mappings, full_blend, map_edges, to_dot
from .clustering import categorize, categorize_chunks, estimate_k, estimate_k_medoids, kmeans, kmedoids
from .corpus import Level, LevelChunk, TileLegend, load_corpus, parse_legend, parse_level, render_level, segment_chunks
from .errors import InvariantError, LevelBlendError
from .evaluation import mann_whitney_u, rank_levels, score_level, spearman, wilcoxon_signed_rank
from .generation import explain_sequence, generate, generate_chunk, generate_level
from .model import LNode, cond_prob, learn_corpus, learn_lnode
from .scoring import score_chunk
from .serialize import load_models, save_models

__version__ = "0.1.0"

__all__ = [
    "InvariantError", "LNode", "Level", "LevelBlendError", "LevelChunk", "TileLegend",
    "auto_blend", "blend_lnode", "build_sgraph", "categorize", "categorize_chunks", "cond_prob",
    "derive_style_mappings", "estimate_k", "estimate_k_medoids", "explain_sequence", "full_blend",
    "generate", "generate_chunk", "generate_level", "kmeans", "kmedoids", "learn_corpus", "learn_lnode",
    "load_corpus", "load_models", "mann_whitney_u", "map_edges", "parse_legend", "parse_level",
    "rank_levels", "render_level", "save_models", "score_chunk", "score_level", "segment_chunks",
    "spearman", "to_dot", "wilcoxon_signed_rank",
]
