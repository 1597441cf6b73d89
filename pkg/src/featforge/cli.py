"""Command line entry point: ``featforge collect|search|compare|score``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .data import ClassTooSmall, LoadError
from .evaluator import ConstantTarget
from .expr import EvalError, ParseError, Vocabulary, parse_postfix, render_infix, serialize
from .orchestrator import Search, collect_only, compare_strategies, load_dataset, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring RunConfig")
    common.add_argument("--data", help="CSV path, or 'synthetic[:seed]'")
    common.add_argument("--target", help="target column name or index")
    common.add_argument("--task", choices=["auto", "cls", "reg"])
    common.add_argument("--backend", choices=["mock", "remote"])
    common.add_argument("--strategy", help="balanced | topm | random")
    common.add_argument("--iters", type=int, help="number of iterations")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="extra override, dotted keys allowed (JSON values)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="featforge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="seed populations and dump them")
    sub.add_parser("search", parents=[common], help="full search run")
    cmp_ = sub.add_parser("compare", parents=[common], help="compare strategies or collectors")
    cmp_.add_argument("--strategies", default="balanced,topm,random",
                      help="comma separated strategies")
    cmp_.add_argument("--collectors", help="comma separated collectors; replaces --strategies")
    cmp_.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    score = sub.add_parser("score", parents=[common], help="score raw features or a sequence")
    score.add_argument("--sequence", help="individual in the serialization grammar")
    return p


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, key in (("data", "data"), ("target", "target"), ("task", "task"),
                      ("backend", "backend"), ("strategy", "strategy"), ("iters", "iterations"),
                      ("seed", "seed"), ("out", "out_dir")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = _parse_value(value)
    return cfg.updated(overrides) if overrides else cfg


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _headline(report: dict) -> dict:
    best = report["best"]
    return {"baseline_score": report["baseline_score"],
            "seed_best_score": report["seed_best_score"],
            "best_score": best["score"] if best else None,
            "best_sequence": best["sequence"] if best else None,
            "verdicts": report["verdicts"]}


def cmd_collect(cfg: RunConfig) -> int:
    report = collect_only(cfg)
    _print(_headline(report))
    return EXIT_OK


def cmd_search(cfg: RunConfig) -> int:
    report = run(cfg)
    _print(_headline(report))
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    if args.collectors:
        variants = {c: {"collector": c} for c in args.collectors.split(",") if c}
    else:
        variants = {s: {"strategy": s} for s in args.strategies.split(",") if s}
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    rows = compare_strategies(cfg, variants, seeds)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    print(f"{'variant':<12} {'best':>10} {'valid':>10} {'seed best':>10}")
    for r in rows:
        print(f"{r['variant']:<12} {r['mean_best_score']:>10.4f} {r['mean_valid_count']:>10.1f} "
              f"{r['mean_seed_best_score']:>10.4f}")
    return EXIT_OK


def cmd_score(cfg: RunConfig, args) -> int:
    # scoring never prompts, so skip remote endpoint setup
    search = Search(cfg, load_dataset(cfg), backend=object())
    result = {"dataset": search.ds.name, "task": search.ds.task.value,
              "baseline_score": search.scorer.baseline()}
    if args.sequence:
        vocab = Vocabulary(search.ds.n_features, search.operators)
        ind = parse_postfix(args.sequence, vocab, origin="seed")
        result["sequence"] = serialize(ind)
        result["infix"] = [render_infix(e) for e in ind.expressions]
        result["score"] = search.scorer.score(ind)
    _print(result)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "collect":
            return cmd_collect(cfg)
        if args.command == "search":
            return cmd_search(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args)
        return cmd_score(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LoadError, ClassTooSmall, ConstantTarget, ParseError, EvalError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
