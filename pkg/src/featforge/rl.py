"""Reinforcement-learning data collector.

Three epsilon-greedy Q-learning agents (head feature, operation, tail
feature) grow a working feature set one crossed feature per step.  Every
accepted step is recorded as a scored Individual; one episode yields one
population.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .evaluator import Scorer
from .expr import (DEFAULT_OPERATORS, DegenerateOutput, Expression, Individual, OperatorSet,
                   Token, combine, evaluate_expression)
from .state import STATE_DIM, represent

logger = logging.getLogger(__name__)

HEAD, OPERATION, TAIL = "head", "operation", "tail"
ROLES = (HEAD, OPERATION, TAIL)


# --- Q approximators ----------------------------------------------------------

class LinearQ:
    """Q(s) = W s + b, one output per action."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 init_scale: float = 0.0):
        rng = rng or np.random.default_rng(0)
        self.W = init_scale * rng.standard_normal((n_out, n_in))
        self.b = np.zeros(n_out)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    @property
    def n_out(self) -> int:
        return self.b.shape[0]

    def predict(self, s: np.ndarray) -> np.ndarray:
        return self.W @ s + self.b

    def gradient(self, s, action: int, target: float):
        """Loss (Q(s,a) - target)^2 and its gradient w.r.t. params (target fixed)."""
        q = self.predict(s)[action]
        g = 2.0 * (q - target)
        dW = np.zeros_like(self.W)
        db = np.zeros_like(self.b)
        dW[action] = g * s
        db[action] = g
        return (q - target) ** 2, [dW, db]

    def step(self, grads, lr: float) -> None:
        for p, g in zip(self.params, grads):
            p -= lr * g

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size


class MLPQ(LinearQ):
    """One tanh hidden layer: Q(s) = W2 tanh(W1 s + b1) + b2."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 hidden: int = 32):
        rng = rng or np.random.default_rng(0)
        self.W1 = rng.standard_normal((hidden, n_in)) / np.sqrt(n_in)
        self.b1 = np.zeros(hidden)
        self.W2 = 0.1 * rng.standard_normal((n_out, hidden)) / np.sqrt(hidden)
        self.b2 = np.zeros(n_out)

    @property
    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    @property
    def n_out(self):
        return self.b2.shape[0]

    def predict(self, s):
        return self.W2 @ np.tanh(self.W1 @ s + self.b1) + self.b2

    def gradient(self, s, action, target):
        h = np.tanh(self.W1 @ s + self.b1)
        q = self.W2[action] @ h + self.b2[action]
        g = 2.0 * (q - target)
        dW2 = np.zeros_like(self.W2)
        db2 = np.zeros_like(self.b2)
        dW2[action] = g * h
        db2[action] = g
        dz = g * self.W2[action] * (1.0 - h * h)
        return (q - target) ** 2, [np.outer(dz, s), dz, dW2, db2]


def make_approximator(kind: str, n_in: int, n_out: int, rng, hidden: int = 32):
    if kind == "linear":
        return LinearQ(n_in, n_out, rng)
    if kind == "mlp":
        return MLPQ(n_in, n_out, rng, hidden)
    raise ValueError(f"unknown approximator {kind!r}")


class RunningNorm:
    """Running mean/variance standardisation of state vectors."""

    def __init__(self, dim: int = STATE_DIM):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        var = self.m2 / self.n if self.n else np.zeros_like(self.m2)
        return (x - self.mean) / np.sqrt(var + 1e-8)


# --- agents --------------------------------------------------------------------

@dataclass
class Agent:
    role: str
    approximator: LinearQ
    epsilon: float = 1.0
    learning_rate: float = 1e-3
    gamma: float = 0.9


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    actions: tuple[int, int, int]   # head index, operator index, tail index
    reward: float
    next_state: np.ndarray
    terminal: bool
    n_next_features: int


def select_action(agent: Agent, state: np.ndarray, n_actions: int,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy over the first ``n_actions`` outputs; ties go to the lowest index."""
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    if rng.random() < agent.epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(agent.approximator.predict(state)[:n_actions]))


def bellman_target(agent: Agent, tr: Transition) -> float:
    if tr.terminal:
        return float(tr.reward)
    q_next = agent.approximator.predict(tr.next_state)
    n = agent.approximator.n_out if agent.role == OPERATION else tr.n_next_features
    return float(tr.reward + agent.gamma * np.max(q_next[:n]))


def q_update(agent: Agent, tr: Transition) -> Agent:
    """One semi-gradient step on the squared Bellman residual (in place)."""
    action = tr.actions[ROLES.index(agent.role)]
    target = bellman_target(agent, tr)
    _, grads = agent.approximator.gradient(tr.state, action, target)
    agent.approximator.step(grads, agent.learning_rate)
    return agent


# --- collection -------------------------------------------------------------------

@dataclass
class CollectorConfig:
    episodes: int = 8
    steps: int = 12
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    gamma: float = 0.9
    lr: float = 1e-3
    approximator: str = "mlp"
    hidden: int = 32
    degenerate_penalty: float = 0.01
    max_expr_tokens: int = 63
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1 or self.steps < 1:
            raise ValueError("episodes and steps must be >= 1")
        for name in ("epsilon_start", "epsilon_end", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")


@dataclass
class Episode:
    population: list[Individual]
    rewards: list[float]
    accepted: list[bool]
    initial_score: float
    final_score: float


@dataclass
class CollectionRun:
    episodes: list[Episode]
    transitions: list[Transition] = field(default_factory=list)

    @property
    def populations(self) -> list[list[Individual]]:
        return [e.population for e in self.episodes]

    def best(self) -> Individual | None:
        members = [ind for e in self.episodes for ind in e.population]
        return max(members, key=lambda i: i.score, default=None)


class Collector:
    """Holds the three agents and the shared state normaliser for one run."""

    def __init__(self, ds: Dataset, scorer: Scorer, cfg: CollectorConfig | None = None,
                 operators: OperatorSet = DEFAULT_OPERATORS, learn: bool = True,
                 origin: str = "rl_collector"):
        self.ds = ds
        self.scorer = scorer
        self.cfg = cfg or CollectorConfig()
        self.operators = operators
        self.ops = list(operators)
        self.learn = learn
        self.origin = origin
        self.rng = np.random.default_rng(self.cfg.seed)
        n_feat_out = ds.n_features + self.cfg.steps
        outs = {HEAD: n_feat_out, OPERATION: len(self.ops), TAIL: n_feat_out}
        self.agents = {
            role: Agent(role, make_approximator(self.cfg.approximator, STATE_DIM, outs[role],
                                                self.rng, self.cfg.hidden),
                        self.cfg.epsilon_start, self.cfg.lr, self.cfg.gamma)
            for role in ROLES
        }
        self.norm = RunningNorm()
        self._global_step = 0

    def _epsilon(self) -> float:
        total = self.cfg.episodes * self.cfg.steps
        if not self.learn:
            return 1.0
        if total == 1:
            return self.cfg.epsilon_start
        frac = self._global_step / (total - 1)
        return self.cfg.epsilon_start + frac * (self.cfg.epsilon_end - self.cfg.epsilon_start)

    def run_episode(self) -> tuple[Episode, list[Transition]]:
        ds, cfg = self.ds, self.cfg
        exprs = [Expression((Token.feature(i),)) for i in range(ds.n_features)]
        working = ds.X.copy()
        y_prev = self.scorer.score(Individual(tuple(exprs)))
        y0 = y_prev
        raw_state = represent(working)
        self.norm.update(raw_state)
        population, rewards, accepted, transitions = [], [], [], []

        for t in range(1, cfg.steps + 1):
            eps = self._epsilon()
            s = self.norm(raw_state)
            for agent in self.agents.values():
                agent.epsilon = eps
            h = select_action(self.agents[HEAD], s, len(exprs), self.rng)
            o = select_action(self.agents[OPERATION], s, len(self.ops), self.rng)
            tl = select_action(self.agents[TAIL], s, len(exprs), self.rng)
            op = self.ops[o]
            new = combine(exprs[h], op, exprs[tl])
            try:
                if len(new) > cfg.max_expr_tokens:
                    raise DegenerateOutput(f"expression exceeds {cfg.max_expr_tokens} tokens")
                col = evaluate_expression(new, ds.X, self.operators)
            except DegenerateOutput:
                reward = -cfg.degenerate_penalty
                ok = False
                next_raw = raw_state
            else:
                exprs.append(new)
                working = np.column_stack([working, col])
                ind = Individual(tuple(exprs), origin=self.origin)
                y_t = self.scorer.score(ind)
                reward = y_t - y_prev
                y_prev = y_t
                population.append(ind.with_score(y_t))
                ok = True
                next_raw = represent(working)
                self.norm.update(next_raw)
            rewards.append(reward)
            accepted.append(ok)
            tr = Transition(s, (h, o, tl), reward, self.norm(next_raw), t == cfg.steps,
                            len(exprs))
            transitions.append(tr)
            if self.learn:
                for agent in self.agents.values():
                    q_update(agent, tr)
            raw_state = next_raw
            self._global_step += 1

        return Episode(population, rewards, accepted, y0, y_prev), transitions

    def run(self) -> CollectionRun:
        result = CollectionRun([])
        for e in range(self.cfg.episodes):
            episode, transitions = self.run_episode()
            result.episodes.append(episode)
            result.transitions.extend(transitions)
            best = max((i.score for i in episode.population), default=float("nan"))
            logger.debug("episode %d: %d individuals, best %.4f", e, len(episode.population), best)
        return result


def collect(ds: Dataset, scorer: Scorer, cfg: CollectorConfig | None = None,
            operators: OperatorSet = DEFAULT_OPERATORS) -> CollectionRun:
    return Collector(ds, scorer, cfg, operators).run()


def random_collect(ds: Dataset, scorer: Scorer, cfg: CollectorConfig | None = None,
                   operators: OperatorSet = DEFAULT_OPERATORS) -> CollectionRun:
    """Same loop with uniform selections and no learning."""
    return Collector(ds, scorer, cfg, operators, learn=False,
                     origin="random_collector").run()
