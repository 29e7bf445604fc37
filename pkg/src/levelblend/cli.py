"""``levelblend`` command line.

Exit status: 0 on success, 1 for bad input (unreadable or malformed files,
invalid arguments), 2 when an internal invariant check fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .blending import DegenerateBlendWarning, auto_blend, blend_pair, build_sgraph, full_blend, to_dot
from .corpus import TileLegend, load_corpus, load_legend, load_level, write_level
from .errors import InvariantError, LevelBlendError
from .evaluation import mann_whitney_u, rank_levels, score_level, spearman, wilcoxon_signed_rank
from .generation import explain_sequence, generate_level
from .model import check_lnode, learn_corpus
from .serialize import ModelSet, dumps, load_models, load_scores, save_models, scores_to_document

SUBSYSTEMS = ("categorize", "styles", "generate", "sample")


@dataclasses.dataclass
class RunConfig:
    command: str
    corpus: str | None = None
    models: tuple[str, ...] = ()
    chunk_width: int = 16
    stride: int = 16
    seed: int = 0
    recluster_threshold: float = 1.25
    top_p: int = 5
    output: str | None = None

    def __post_init__(self):
        for name in ("chunk_width", "stride", "top_p"):
            if getattr(self, name) <= 0:
                raise LevelBlendError(f"--{name.replace('_', '-')} must be positive")
        if self.recluster_threshold <= 0:
            raise LevelBlendError("--recluster-threshold must be positive")
        if not -(2**63) <= self.seed < 2**64:
            raise LevelBlendError("--seed must fit in 64 bits")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["models"] = list(self.models)
        d["version"] = __version__
        return d

    def seeds(self) -> dict[str, int]:
        """One child stream per subsystem, spawned in a fixed order from the run seed."""
        children = np.random.SeedSequence(self.seed % 2**64).spawn(len(SUBSYSTEMS))
        return {name: int(child.generate_state(1)[0]) for name, child in zip(SUBSYSTEMS, children)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(args, structured: dict, text: str) -> None:
    if args.format == "structured":
        sys.stdout.write(dumps(structured))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _config(args, **extra) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    values.update(extra)
    return RunConfig(**values)


def _legend_for(args, models: ModelSet | None = None) -> TileLegend:
    if getattr(args, "legend", None):
        return load_legend(args.legend)
    if models is not None and models.legend is not None:
        return models.legend
    raise LevelBlendError("no legend available: pass --legend")


def _check_all(lnodes) -> None:
    for ln in lnodes:
        check_lnode(ln)


def cmd_learn(args) -> int:
    cfg = _config(args, command="learn", output=args.out)
    corpus = load_corpus(args.corpus)
    if not corpus.levels:
        raise LevelBlendError(f"{args.corpus}: corpus has no levels")
    seeds = cfg.seeds()
    learned = learn_corpus(
        corpus.levels, corpus.legend, cfg.chunk_width, cfg.stride, seeds["styles"], cfg.recluster_threshold, seeds["categorize"]
    )
    _check_all(learned.lnodes)
    save_models(args.out, learned.lnodes, corpus.legend, learned.categorization, cfg.to_dict())
    counts = {ln.id: learned.chunk_counts[ln.id] for ln in learned.lnodes}
    text = [f"categories: {len(learned.lnodes)}"] + [f"  {lid}: {n} chunks" for lid, n in counts.items()]
    _emit(args, {"config": cfg.to_dict(), "categories": len(counts), "chunk_counts": counts}, "\n".join(text))
    return 0


def cmd_generate(args) -> int:
    cfg = _config(args, command="generate", models=(args.model,), output=args.out)
    models = load_models(args.model)
    legend = _legend_for(args, models)
    if args.target_level:
        target = load_level(args.target_level, legend)
        explained = explain_sequence(target, models.lnodes, cfg.chunk_width)
        sequence = [models.by_id(lid) for _, lid, _ in explained]
    else:
        sequence = [models.by_id(lid.strip()) for lid in args.lnodes.split(",") if lid.strip()]
    if not sequence:
        raise LevelBlendError("no LNodes to generate from")
    level = generate_level(sequence, seed=cfg.seeds()["generate"], top_p=cfg.top_p, level_id=Path(args.out).stem)
    ids = [ln.id for ln in sequence]
    write_level(args.out, level, legend, run={**cfg.to_dict(), "lnodes": ids})
    _emit(args, {"config": cfg.to_dict(), "lnodes": ids, "width": level.width, "height": level.height},
          f"wrote {args.out}: {level.width}x{level.height} from {','.join(ids)}")
    return 0


def cmd_blend(args) -> int:
    cfg = _config(args, command="blend", models=(args.model,), output=args.out)
    models = load_models(args.model)
    legend = _legend_for(args, models)
    target = load_level(args.target_level, legend)
    if args.auto:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateBlendWarning)
            out = auto_blend(models.lnodes, target, cfg.chunk_width, legend)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    elif args.full:
        tags = [t.strip() for t in (args.tags or "").split(",") if t.strip()]
        if len(tags) != 2:
            raise LevelBlendError("--full needs --tags a,b")
        out = full_blend(models.lnodes, tags[0], tags[1], target, cfg.chunk_width, legend)
    else:
        if not (args.source and args.target):
            raise LevelBlendError("pass --source and --target, or --auto, or --full")
        from .blending import assignable_styles

        tgt = models.by_id(args.target)
        pb = blend_pair(models.by_id(args.source), tgt, assignable_styles(target, tgt, cfg.chunk_width))
        out = list(models.lnodes) + [pb.lnode]
    _check_all(out)
    blends = [ln.id for ln in out[len(models.lnodes):]]
    save_models(args.out, out, legend, None, cfg.to_dict())
    _emit(args, {"config": cfg.to_dict(), "blends": blends}, f"{len(blends)} blended LNode(s): {', '.join(blends) or '-'}")
    return 0


def cmd_score(args) -> int:
    cfg = _config(args, command="score", models=(args.model,), output=args.out)
    models = load_models(args.model)
    legend = _legend_for(args, models)
    level = load_level(args.level, legend)
    dist = score_level(level, models.lnodes, cfg.chunk_width, args.sample, cfg.seeds()["sample"], Path(args.model).stem)
    doc = scores_to_document(dist, cfg.chunk_width, cfg.to_dict())
    if args.out:
        Path(args.out).write_text(dumps(doc), encoding="utf-8")
    lines = [f"{i}\t{s:.6f}\t{ln}" for i, s, ln in zip(dist.chunk_indices, dist.scores, dist.best_lnodes)]
    lines.append(f"median\t{dist.median:.6f}")
    lines.append(f"mean\t{dist.mean:.6f}")
    _emit(args, doc, "\n".join(lines))
    return 0


def cmd_rank(args) -> int:
    cfg = _config(args, command="rank", models=(args.model,))
    models = load_models(args.model)
    legend = _legend_for(args, models)
    levels = [load_level(p, legend) for p in args.levels]
    ranked = rank_levels(levels, models.lnodes, cfg.chunk_width)
    rows = [dataclasses.asdict(r) for r in ranked]
    text = "\n".join(f"{r.rank}\t{r.level_id}\t{r.median:.6f}\t{r.mean:.6f}" for r in ranked)
    _emit(args, {"config": cfg.to_dict(), "ranking": rows}, text)
    return 0


def cmd_stats(args) -> int:
    a, b = load_scores(args.scores_a), load_scores(args.scores_b)
    if args.test == "mwu":
        stat, p = mann_whitney_u(a, b, args.alternative)
        name = "U"
    elif args.test == "wilcoxon":
        stat, p = wilcoxon_signed_rank(a, b, args.alternative)
        name = "W"
    else:
        if args.alternative != "two-sided":
            raise LevelBlendError("spearman supports only --alternative two-sided")
        stat, p = spearman(a.scores, b.scores)
        name = "rho"
    doc = {"test": args.test, "alternative": args.alternative, "statistic": name, "value": stat, "p": p,
           "n_a": len(a), "n_b": len(b)}
    _emit(args, doc, f"{name}\t{stat:.6g}\np\t{p:.6g}")
    return 0


def _curve_text(name: str, curve: dict) -> list[str]:
    lines = [f"# distortion curve {name}", "K\tS_K\tf(K)"]
    for k in sorted(curve["f"], key=int):
        lines.append(f"{k}\t{curve['S'][k]:.6g}\t{curve['f'][k]:.6g}")
    return lines


def cmd_inspect(args) -> int:
    models = load_models(args.model)
    legend = models.legend
    wanted = [models.by_id(args.lnode)] if args.lnode else models.lnodes
    dots = {ln.id: to_dot(build_sgraph(ln), ln, legend) for ln in wanted}
    if args.dot_dir:
        out = Path(args.dot_dir)
        out.mkdir(parents=True, exist_ok=True)
        for lid, dot in dots.items():
            (out / f"{lid.replace('/', '_')}.dot").write_text(dot, encoding="utf-8")
    cat = models.document.get("categorization")
    curves = {}
    if cat:
        curves["categories"] = cat["curve"]
        curves.update({f"recluster {k}": v for k, v in cat.get("reclustered", {}).items()})
    lines = []
    for name, curve in curves.items():
        lines += _curve_text(name, curve)
    if not args.dot_dir:
        lines += [dot.rstrip("\n") for dot in dots.values()]
    _emit(args, {"dot": dots, "curves": curves}, "\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="levelblend", description="Learn, generate, blend and score tile-based platformer levels.")
    p.add_argument("--version", action="version", version=f"levelblend {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--format", choices=("text", "structured"), default="text")
        sp.add_argument("--chunk-width", dest="chunk_width", type=int, default=16)
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("learn", help="learn a model set from a corpus directory")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--stride", type=int, default=16)
    sp.add_argument("--recluster-threshold", dest="recluster_threshold", type=float, default=1.25)
    common(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("generate", help="generate a level from a sequence of LNodes")
    sp.add_argument("--model", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--target-level", dest="target_level")
    g.add_argument("--lnodes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--top-p", dest="top_p", type=int, default=5)
    sp.add_argument("--legend")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("blend", help="blend LNodes of a model set")
    sp.add_argument("--model", required=True)
    sp.add_argument("--target-level", dest="target_level", required=True)
    sp.add_argument("--out", required=True)
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--auto", action="store_true")
    mode.add_argument("--full", action="store_true")
    sp.add_argument("--tags")
    sp.add_argument("--source")
    sp.add_argument("--target")
    sp.add_argument("--legend")
    common(sp)
    sp.set_defaults(func=cmd_blend)

    sp = sub.add_parser("score", help="score a level chunk by chunk")
    sp.add_argument("--model", required=True)
    sp.add_argument("--level", required=True)
    sp.add_argument("--out")
    sp.add_argument("--sample", type=int)
    sp.add_argument("--legend")
    common(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("rank", help="rank levels by median chunk score")
    sp.add_argument("--model", required=True)
    sp.add_argument("--legend")
    sp.add_argument("levels", nargs="+")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("stats", help="compare two score files")
    sp.add_argument("--test", choices=("mwu", "wilcoxon", "spearman"), required=True)
    sp.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")
    sp.add_argument("--format", choices=("text", "structured"), default="text")
    sp.add_argument("scores_a")
    sp.add_argument("scores_b")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("inspect", help="dump S-structure graphs (DOT) and distortion curves")
    sp.add_argument("--model", required=True)
    sp.add_argument("--lnode")
    sp.add_argument("--dot-dir", dest="dot_dir")
    sp.add_argument("--format", choices=("text", "structured"), default="text")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"levelblend: internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (LevelBlendError, OSError) as exc:
        print(f"levelblend: error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"levelblend: error: malformed input, missing {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
