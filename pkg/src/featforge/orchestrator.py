"""Search loop: seed the database, then prompt, generate, verify, score, insert."""
from __future__ import annotations

import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ConfigError, RunConfig
from .data import Dataset, load_csv, make_folds, synthetic_interaction
from .database import Database
from .evaluator import BudgetExhausted, Scorer
from .expr import (DEFAULT_OPERATORS, AllDegenerate, Individual, Vocabulary, canonical_string,
                   render_infix, serialize)
from .generator import (BackendError, MockEvolver, NoSequenceFound, PromptContext, RemoteLLM,
                        build_prompt, extract_sequence)
from .rl import Collector, CollectionRun
from .verifier import Outcome, verify

logger = logging.getLogger(__name__)

BACKEND_FAILURE = "BackendError"
TRAJECTORY_FILE = "trajectory.jsonl"
SUMMARY_FILE = "summary.json"
DUMP_FILE = "db_dump.jsonl"


@dataclass
class TrajectoryPoint:
    iteration: int
    population: int
    outcome: str
    sequence: str | None
    score: float | None
    best_score_so_far: float
    valid_count_so_far: int
    wall_ms: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self))


class TrajectoryWriter:
    """Append-only JSONL trajectory; the file is truncated when opened."""

    def __init__(self, path: Path | None):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, point: TrajectoryPoint) -> None:
        if self._fh:
            self._fh.write(point.to_json() + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def emit_trajectory(points: Sequence[TrajectoryPoint], path) -> Path:
    path = Path(path)
    writer = TrajectoryWriter(path)
    try:
        for p in points:
            writer.write(p)
    finally:
        writer.close()
    return path


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data is None or cfg.data == "synthetic":
        return synthetic_interaction(seed=cfg.seed)
    if cfg.data.startswith("synthetic:"):
        return synthetic_interaction(seed=int(cfg.data.split(":", 1)[1]))
    if cfg.target is None:
        raise ConfigError("a target column is required for CSV data")
    return load_csv(cfg.data, cfg.target, cfg.task)


def make_backend(cfg: RunConfig):
    if cfg.backend == "mock":
        return MockEvolver(seed=cfg.seed + 1, mutation_rate=cfg.mock.mutation_rate,
                           crossover_rate=cfg.mock.crossover_rate)
    try:
        return RemoteLLM(base_url=cfg.llm.base_url, model=cfg.llm.model,
                         temperature=cfg.llm.temperature, max_tokens=cfg.llm.max_tokens,
                         timeout=cfg.llm.timeout, retries=cfg.llm.retries)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def seed_database(db: Database, run: CollectionRun) -> list[int]:
    """Episode i fills population slot i; empty slots get a copy of the best one."""
    for slot, episode in enumerate(run.episodes):
        pop_id = db.populations[slot % db.K].id
        for ind in episode.population:
            db.insert(pop_id, ind)
    return db.fill_empty_from_best()


class Search:
    """One configured run.  ``run()`` executes both phases and returns the report."""

    def __init__(self, cfg: RunConfig, dataset: Dataset | None = None, backend=None):
        self.cfg = cfg
        self.ds = dataset if dataset is not None else load_dataset(cfg)
        self.operators = (DEFAULT_OPERATORS.subset(cfg.operators) if cfg.operators
                          else DEFAULT_OPERATORS)
        self.vocab = Vocabulary(self.ds.n_features, self.operators)
        self.folds = make_folds(self.ds, cfg.cv.k, cfg.cv.seed)
        self.scorer = Scorer(self.ds, cfg.model_spec(), self.folds, self.operators,
                             max_calls=cfg.max_evaluations)
        self.collector_cfg = cfg.collector_config()
        self.max_features = cfg.max_features or self.ds.n_features + self.collector_cfg.steps
        self.backend = backend if backend is not None else make_backend(cfg)
        self.db = Database(cfg.K, cfg.P)
        self.out = Path(cfg.out_dir) if cfg.out_dir else None
        self.counts: Counter = Counter()
        self.backend_failures = 0
        self.degenerate = 0
        self.points: list[TrajectoryPoint] = []
        self.collection: CollectionRun | None = None
        self._rngs: dict[int, np.random.Generator] = {}

    # phase 1 ------------------------------------------------------------------------
    def seed(self) -> None:
        cfg = self.cfg
        if cfg.collector == "restore":
            self.db = Database.restore(cfg.restore_path, self.vocab, cfg.P, cfg.K)
            return
        if self.collector_cfg.episodes != cfg.K:
            logger.info("collector runs %d episodes for %d populations",
                        self.collector_cfg.episodes, cfg.K)
        learn = cfg.collector == "rl"
        collector = Collector(self.ds, self.scorer, self.collector_cfg, self.operators,
                              learn=learn, origin="rl_collector" if learn else "random_collector")
        self.collection = collector.run()
        filled = seed_database(self.db, self.collection)
        if filled:
            logger.info("populations %s had no novel seeds; filled from the best one", filled)

    # phase 2 ------------------------------------------------------------------------
    def _rng(self, pop_id: int) -> np.random.Generator:
        if pop_id not in self._rngs:
            self._rngs[pop_id] = np.random.default_rng([self.cfg.seed, 7, pop_id])
        return self._rngs[pop_id]

    def _attempt(self, iteration: int, pop_id: int, writer: TrajectoryWriter) -> None:
        cfg = self.cfg
        t0 = time.perf_counter()
        demos = self.db.sample_for_prompt(pop_id, cfg.M, cfg.strategy, self._rng(pop_id))
        ctx = PromptContext(tuple(serialize(d) for d in demos), self.ds.n_features,
                            tuple(op.token for op in self.operators),
                            max_prompt_chars=cfg.max_prompt_chars)
        sequence = score = None
        try:
            raw = self.backend.generate(build_prompt(ctx))
        except BackendError as exc:
            logger.warning("iteration %d population %d: backend failed: %s",
                           iteration, pop_id, exc)
            self.backend_failures += 1
            outcome = BACKEND_FAILURE
        else:
            try:
                sequence = extract_sequence(raw, ctx.output_marker, self.operators)
            except NoSequenceFound:
                sequence = ""
            verdict = verify(sequence, self.db, self.vocab, self.max_features)
            outcome = verdict.outcome.value
            self.counts[outcome] += 1
            if verdict.valid:
                ind = verdict.individual
                if verdict.truncated:
                    logger.info("truncated candidate to %d expressions", self.max_features)
                try:
                    score = self.scorer.score(ind)
                except AllDegenerate:
                    self.degenerate += 1
                    self.db.register(ind)
                else:
                    self.db.insert(pop_id, ind.with_score(score))
                sequence = serialize(ind)
        best = self.db.best()
        wall = int((time.perf_counter() - t0) * 1000) if cfg.record_timing else 0
        point = TrajectoryPoint(iteration, pop_id, outcome, sequence, score,
                                best.score if best else float("-inf"),
                                self.counts[Outcome.VALID.value], wall)
        self.points.append(point)
        writer.write(point)

    def run(self) -> dict:
        cfg = self.cfg
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)
        baseline = self.scorer.baseline()
        self.seed()
        seed_best = self.db.best()
        writer = TrajectoryWriter(self.out / TRAJECTORY_FILE if self.out else None)
        stopped = None
        completed = 0
        try:
            for it in range(1, cfg.iterations + 1):
                for pop_id in self.db.ids:
                    self._attempt(it, pop_id, writer)
                if it % cfg.cull_every == 0:
                    self.db.cull()
                if cfg.debug_checks:
                    self.db.validate()
                completed = it
        except BudgetExhausted as exc:
            stopped = str(exc)
            logger.warning("stopping early: %s", exc)
        finally:
            writer.close()
        report = self.report(baseline, seed_best, completed, stopped)
        if self.out:
            self.db.dump(self.out / DUMP_FILE)
            (self.out / SUMMARY_FILE).write_text(json.dumps(report, indent=2, sort_keys=True)
                                                 + "\n", encoding="utf-8")
        return report

    def report(self, baseline: float, seed_best: Individual | None, completed: int,
               stopped: str | None) -> dict:
        best = self.db.best()
        attempts = len(self.points)
        config = self.cfg.to_dict()
        config.pop("out_dir", None)
        return {
            "dataset": {"name": self.ds.name, "task": self.ds.task.value,
                        "rows": self.ds.n_rows, "features": self.ds.n_features},
            "baseline_score": baseline,
            "seed_best_score": seed_best.score if seed_best else None,
            "seed_best_sequence": serialize(seed_best) if seed_best else None,
            "best": None if best is None else {
                "sequence": serialize(best),
                "infix": [render_infix(e) for e in best.expressions],
                "score": best.score,
                "origin": best.origin,
            },
            "verdicts": {o.value: self.counts[o.value] for o in Outcome},
            "attempts": attempts,
            "backend_failures": self.backend_failures,
            "degenerate_candidates": self.degenerate,
            "valid_count": self.counts[Outcome.VALID.value],
            "iterations_completed": completed,
            "evaluator_calls": self.scorer.calls,
            "stopped_early": stopped,
            "populations": [{"id": p.id, "size": len(p), "lineage": p.lineage,
                             "best": max((m.score for m in p.members), default=None)}
                            for p in self.db.populations],
            "config": config,
        }


def run(cfg: RunConfig, dataset: Dataset | None = None, backend=None) -> dict:
    return Search(cfg, dataset, backend).run()


def collect_only(cfg: RunConfig, dataset: Dataset | None = None) -> dict:
    """Phase 1 alone: seed the database and dump it."""
    search = Search(cfg.updated({"iterations": 0}), dataset)
    return search.run()


def compare_strategies(cfg: RunConfig, variants: dict[str, dict] | Sequence[str],
                       seeds: Sequence[int] = (0, 1, 2, 3, 4),
                       dataset: Dataset | Callable[[int], Dataset] | None = None) -> list[dict]:
    """Run each variant once per seed and average the headline numbers.

    ``variants`` maps a name to config overrides; a plain list of strategy
    names is shorthand for ``{name: {"strategy": name}}``.
    """
    if not isinstance(variants, dict):
        variants = {str(v): {"strategy": str(v)} for v in variants}
    if len(variants) < 2:
        raise ValueError("compare needs at least two variants")
    rows = []
    for name, overrides in variants.items():
        finals, valids, seeds_best = [], [], []
        for s in seeds:
            vcfg = cfg.updated({**overrides, "seed": s, "out_dir": None})
            ds = dataset(s) if callable(dataset) else dataset
            report = run(vcfg, ds)
            finals.append(report["best"]["score"])
            valids.append(report["valid_count"])
            seeds_best.append(report["seed_best_score"])
        rows.append({"variant": name,
                     "mean_best_score": float(np.mean(finals)),
                     "mean_valid_count": float(np.mean(valids)),
                     "mean_seed_best_score": float(np.mean(seeds_best)),
                     "best_scores": finals, "valid_counts": valids,
                     "seed_best_scores": seeds_best})
    return rows
