"""Multi-population database of scored feature-transformation sequences."""
from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expr import Individual, Vocabulary, canonical_string, parse_postfix, serialize


class UnknownPopulation(KeyError):
    pass


class EmptyPopulation(ValueError):
    pass


class Strategy(str, enum.Enum):
    BALANCED = "balanced"      # random subset, ranked ascending
    TOP_M = "topm"             # best M, ranked ascending
    RANDOM = "random"          # random subset, sample order

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        aliases = {"balancedrandomranked": cls.BALANCED, "topmranked": cls.TOP_M,
                   "randomunordered": cls.RANDOM, "top_m": cls.TOP_M}
        key = str(value).lower()
        try:
            return cls(key)
        except ValueError:
            if key in aliases:
                return aliases[key]
            raise ValueError(f"unknown strategy {value!r}") from None


@dataclass
class Population:
    id: int
    members: list[Individual] = field(default_factory=list)
    lineage: int = 0

    def __len__(self):
        return len(self.members)


def prune_population(pop: Population, P: int) -> Population:
    """Keep the ``P`` best members; ties keep the earlier-inserted one."""
    if P < 1:
        raise ValueError("P must be >= 1")
    if len(pop.members) > P:
        ranked = sorted(range(len(pop.members)), key=lambda i: (-pop.members[i].score, i))
        keep = sorted(ranked[:P])
        pop.members = [pop.members[i] for i in keep]
    return pop


def population_score(pop: Population) -> float:
    if not pop.members:
        raise EmptyPopulation(f"population {pop.id} is empty")
    return max(m.score for m in pop.members)


class Database:
    def __init__(self, K: int = 8, P: int = 10):
        if K < 1 or P < 1:
            raise ValueError("K and P must be >= 1")
        self.K = K
        self.P = P
        self.populations = [Population(i) for i in range(K)]
        self.seen: set[str] = set()
        self._next_id = K
        self._best: Individual | None = None

    # lookups ---------------------------------------------------------------------
    def population(self, pop_id: int) -> Population:
        for pop in self.populations:
            if pop.id == pop_id:
                return pop
        raise UnknownPopulation(pop_id)

    @property
    def ids(self) -> list[int]:
        return [p.id for p in self.populations]

    def members(self):
        for pop in self.populations:
            yield from pop.members

    def best(self) -> Individual | None:
        return self._best

    def contains(self, ind: Individual) -> bool:
        return canonical_string(ind) in self.seen

    # mutation ----------------------------------------------------------------------
    def register(self, ind: Individual) -> None:
        """Record a sequence as seen without storing it."""
        self.seen.add(canonical_string(ind))

    def insert(self, pop_id: int, ind: Individual) -> bool:
        if ind.score is None:
            raise ValueError("only scored individuals can be inserted")
        pop = self.population(pop_id)
        key = canonical_string(ind)
        if key in self.seen:
            return False
        self.seen.add(key)
        pop.members.append(ind)
        if self._best is None or ind.score > self._best.score:
            self._best = ind
        prune_population(pop, self.P)
        return True

    def cull(self) -> list[tuple[int, int]]:
        """Replace the weaker half of the populations with copies of the stronger half.

        Populations are ranked by best member score (ties by position).  The
        i-th ranked population of the top half replaces the i-th ranked of the
        bottom half, but only when strictly better.  Copies get fresh ids and a
        lineage one above their source.  Returns (replaced_id, source_id) pairs.
        """
        scores = [population_score(p) for p in self.populations]
        order = sorted(range(self.K), key=lambda i: (-scores[i], i))
        half = self.K // 2
        top, bottom = order[:half], order[self.K - half:]
        replaced = []
        for src, dst in zip(top, bottom):
            if not scores[src] > scores[dst]:
                continue
            source = self.populations[src]
            old_id = self.populations[dst].id
            self.populations[dst] = Population(self._next_id, copy.deepcopy(source.members),
                                               source.lineage + 1)
            self._next_id += 1
            replaced.append((old_id, source.id))
        return replaced

    def fill_empty_from_best(self) -> list[int]:
        """Give empty populations a copy of the best non-empty population."""
        filled = []
        nonempty = [p for p in self.populations if p.members]
        if not nonempty:
            return filled
        source = max(nonempty, key=population_score)
        for i, pop in enumerate(self.populations):
            if not pop.members:
                self.populations[i] = Population(pop.id, copy.deepcopy(source.members),
                                                 source.lineage + 1)
                filled.append(pop.id)
        return filled

    # sampling ----------------------------------------------------------------------
    def sample_for_prompt(self, pop_id: int, M: int, strategy: Strategy,
                          rng: np.random.Generator) -> list[Individual]:
        pop = self.population(pop_id)
        if not pop.members:
            raise EmptyPopulation(f"population {pop_id} is empty")
        if M < 1:
            raise ValueError("M must be >= 1")
        strategy = Strategy.parse(strategy)
        n = min(M, len(pop.members))
        if strategy is Strategy.TOP_M:
            ranked = sorted(range(len(pop.members)), key=lambda i: (-pop.members[i].score, i))
            idx = ranked[:n]
        else:
            idx = [int(i) for i in rng.choice(len(pop.members), size=n, replace=False)]
        if strategy is not Strategy.RANDOM:
            idx = sorted(idx, key=lambda i: (pop.members[i].score, i))
        return [pop.members[i] for i in idx]

    # checks & persistence ----------------------------------------------------------
    def validate(self) -> None:
        """Raise AssertionError if a structural invariant is broken."""
        assert len(self.populations) == self.K, "population count changed"
        for pop in self.populations:
            assert len(pop.members) <= self.P, f"population {pop.id} exceeds P"
            keys = [canonical_string(m) for m in pop.members]
            assert len(keys) == len(set(keys)), f"duplicate member in population {pop.id}"
            assert set(keys) <= self.seen, "member missing from novelty registry"

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for pop in self.populations:
                for m in pop.members:
                    fh.write(json.dumps({"pop": pop.id, "seq": serialize(m),
                                         "score": m.score, "origin": m.origin}) + "\n")

    @classmethod
    def restore(cls, path, vocab: Vocabulary, P: int = 10, K: int | None = None) -> "Database":
        """Rebuild a database from a dump; populations keep their ids and order."""
        records: dict[int, list[Individual]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            ind = parse_postfix(rec["seq"], vocab, origin=rec.get("origin", "seed"))
            records.setdefault(int(rec["pop"]), []).append(ind.with_score(float(rec["score"])))
        n_pops = len(records)
        K = K or n_pops
        if n_pops > K:
            raise ValueError(f"dump holds {n_pops} populations but K={K}")
        db = cls(K, P)
        for slot, (pid, members) in enumerate(records.items()):
            db.populations[slot] = Population(pid, members[:])
            prune_population(db.populations[slot], P)
            for m in members:
                db.seen.add(canonical_string(m))
                if db._best is None or m.score > db._best.score:
                    db._best = m
        ids = [p.id for p in db.populations]
        free = max(ids) + 1
        for slot in range(n_pops, K):
            db.populations[slot] = Population(free)
            free += 1
        db._next_id = free
        return db
