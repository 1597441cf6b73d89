"""Postfix feature-transformation sequences.

A transformed feature set is written as comma-separated postfix expressions,
e.g. ``f0, f1 f2 +, f0 f2 + f3 *``.  Each expression produces one column
when evaluated against a feature matrix.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

CLIP = 1e12
EPS = 1e-8
DEGENERATE_STD = 1e-12

_FEATURE_RE = re.compile(r"^f(\d+)$")


class ParseError(ValueError):
    pass


class UnknownToken(ParseError):
    pass


class MalformedPostfix(ParseError):
    pass


class EmptySequence(MalformedPostfix):
    pass


class EvalError(ArithmeticError):
    pass


class DegenerateOutput(EvalError):
    pass


class AllDegenerate(EvalError):
    pass


# --- safe operator rules (vectorised) -------------------------------------

def _sign1(b):
    return np.where(b < 0, -1.0, 1.0)


def safe_div(a, b):
    b = np.asarray(b, dtype=float)
    denom = np.where(np.abs(b) > EPS, b, _sign1(b) * EPS)
    return a / denom


def safe_log(x):
    return np.log(np.abs(x) + EPS)


def safe_sqrt(x):
    return np.sqrt(np.abs(x))


def safe_reciprocal(x):
    return safe_div(1.0, x)


@dataclass(frozen=True)
class Operator:
    name: str
    arity: int
    fn: Callable = field(compare=False, repr=False)
    symbol: str | None = None

    @property
    def token(self) -> str:
        """Spelling used when serialising."""
        return self.symbol or self.name


@dataclass(frozen=True)
class OperatorSet:
    operators: tuple[Operator, ...]

    def __post_init__(self):
        names = set()
        for op in self.operators:
            for key in {op.name, op.token}:
                if key in names:
                    raise ValueError(f"duplicate operator id {key!r}")
                names.add(key)
            if op.arity not in (1, 2):
                raise ValueError(f"operator {op.name!r} has unsupported arity {op.arity}")

    @property
    def unary(self) -> tuple[Operator, ...]:
        return tuple(op for op in self.operators if op.arity == 1)

    @property
    def binary(self) -> tuple[Operator, ...]:
        return tuple(op for op in self.operators if op.arity == 2)

    def lookup(self, text: str) -> Operator | None:
        for op in self.operators:
            if text == op.name or text == op.symbol:
                return op
        return None

    def subset(self, names: Iterable[str]) -> "OperatorSet":
        chosen = []
        for n in names:
            op = self.lookup(n)
            if op is None:
                raise ValueError(f"unknown operator {n!r}")
            chosen.append(op)
        return OperatorSet(tuple(chosen))

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)


DEFAULT_OPERATORS = OperatorSet((
    Operator("add", 2, np.add, "+"),
    Operator("sub", 2, np.subtract, "-"),
    Operator("mul", 2, np.multiply, "*"),
    Operator("div", 2, safe_div, "/"),
    Operator("sqrt", 1, safe_sqrt),
    Operator("log", 1, safe_log),
    Operator("square", 1, np.square),
    Operator("reciprocal", 1, safe_reciprocal),
    Operator("sin", 1, np.sin),
    Operator("cos", 1, np.cos),
    Operator("tanh", 1, np.tanh),
))


@dataclass(frozen=True)
class Vocabulary:
    n_features: int
    operators: OperatorSet = DEFAULT_OPERATORS

    def feature_tokens(self) -> list[str]:
        return [f"f{i}" for i in range(self.n_features)]


# --- tokens, expressions, individuals --------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # "feature" or "op"
    value: int | str
    arity: int = 0

    @classmethod
    def feature(cls, index: int) -> "Token":
        return cls("feature", int(index), 0)

    @classmethod
    def op(cls, op: Operator) -> "Token":
        return cls("op", op.token, op.arity)

    @property
    def is_feature(self) -> bool:
        return self.kind == "feature"

    def __str__(self):
        return f"f{self.value}" if self.is_feature else str(self.value)


def stack_balanced(arities: Sequence[int]) -> bool:
    """Postfix validity check over token arities (0 for operands)."""
    depth = 0
    for a in arities:
        if a > depth:
            return False
        depth = depth - a + 1
    return depth == 1


@dataclass(frozen=True)
class Expression:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise EmptySequence("empty expression")
        if not stack_balanced([t.arity for t in self.tokens]):
            raise MalformedPostfix(f"unbalanced postfix: {self}")

    def __str__(self):
        return " ".join(str(t) for t in self.tokens)

    def __len__(self):
        return len(self.tokens)

    def feature_indices(self) -> set[int]:
        return {t.value for t in self.tokens if t.is_feature}


ORIGINS = ("rl_collector", "random_collector", "generator", "seed")


@dataclass(frozen=True)
class Individual:
    expressions: tuple[Expression, ...]
    score: float | None = field(default=None, compare=False)
    origin: str = field(default="seed", compare=False)

    def __post_init__(self):
        if not self.expressions:
            raise EmptySequence("individual has no expressions")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")

    def __str__(self):
        return serialize(self)

    def __len__(self):
        return len(self.expressions)

    def with_score(self, score: float) -> "Individual":
        return Individual(self.expressions, float(score), self.origin)

    def with_origin(self, origin: str) -> "Individual":
        return Individual(self.expressions, self.score, origin)

    def truncated(self, max_features: int) -> "Individual":
        return Individual(self.expressions[:max_features], self.score, self.origin)

    @classmethod
    def identity(cls, n_features: int, origin: str = "seed") -> "Individual":
        return cls(tuple(Expression((Token.feature(i),)) for i in range(n_features)),
                   origin=origin)


# --- parsing and rendering ---------------------------------------------------

def tokenize(text: str, vocab: Vocabulary) -> list[list[Token]]:
    """Split serialised text into token lists, resolving every symbol.

    Raises UnknownToken for anything outside the vocabulary; stack balance and
    empty groups are left to the caller.
    """
    groups = []
    for chunk in text.split(","):
        words = chunk.split()
        toks = []
        for w in words:
            m = _FEATURE_RE.match(w)
            if m:
                idx = int(m.group(1))
                if idx >= vocab.n_features:
                    raise UnknownToken(f"feature {w!r} out of range (n={vocab.n_features})")
                toks.append(Token.feature(idx))
                continue
            op = vocab.operators.lookup(w)
            if op is None:
                raise UnknownToken(f"unknown token {w!r}")
            toks.append(Token.op(op))
        groups.append(toks)
    return groups


def parse_postfix(text: str, vocab: Vocabulary, origin: str = "seed") -> Individual:
    groups = tokenize(text, vocab)
    if not any(groups):
        raise EmptySequence("no expressions in sequence")
    return Individual(tuple(Expression(tuple(g)) for g in groups), origin=origin)


def serialize(ind: Individual) -> str:
    return ", ".join(str(e) for e in ind.expressions)


def canonical_string(ind: Individual) -> str:
    """Order-insensitive serialisation used for novelty checks."""
    return ", ".join(sorted(str(e) for e in ind.expressions))


def render_infix(expr: Expression) -> str:
    stack: list[str] = []
    for t in expr.tokens:
        if t.is_feature:
            stack.append(str(t))
        elif t.arity == 1:
            stack.append(f"{t.value}({stack.pop()})")
        else:
            b = stack.pop()
            a = stack.pop()
            stack.append(f"({a}{t.value}{b})")
    return stack[0]


# --- evaluation ----------------------------------------------------------------

def eval_column(expr: Expression, X: np.ndarray,
                operators: OperatorSet = DEFAULT_OPERATORS) -> np.ndarray:
    """Stack evaluation with per-step clipping and no degeneracy check."""
    stack: list[np.ndarray] = []
    with np.errstate(all="ignore"):
        for t in expr.tokens:
            if t.is_feature:
                stack.append(np.clip(X[:, t.value], -CLIP, CLIP))
                continue
            fn = operators.lookup(t.value).fn
            if t.arity == 1:
                out = fn(stack.pop())
            else:
                b = stack.pop()
                a = stack.pop()
                out = fn(a, b)
            stack.append(np.clip(out, -CLIP, CLIP))
    return np.asarray(stack[0], dtype=float)


def is_degenerate(col: np.ndarray) -> bool:
    return (not np.all(np.isfinite(col))) or float(np.std(col)) < DEGENERATE_STD


def evaluate_expression(expr: Expression, X: np.ndarray,
                        operators: OperatorSet = DEFAULT_OPERATORS) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a 2-D matrix with at least one row")
    bad = [i for i in expr.feature_indices() if i >= X.shape[1]]
    if bad:
        raise ValueError(f"feature index {max(bad)} out of range for {X.shape[1]} columns")
    col = eval_column(expr, X, operators)
    if is_degenerate(col):
        raise DegenerateOutput(f"degenerate column from {expr}")
    return col


def materialize(ind: Individual, X: np.ndarray,
                operators: OperatorSet = DEFAULT_OPERATORS) -> np.ndarray:
    """Evaluate every expression; degenerate columns are dropped."""
    cols = []
    for expr in ind.expressions:
        try:
            cols.append(evaluate_expression(expr, X, operators))
        except DegenerateOutput:
            continue
    if not cols:
        raise AllDegenerate(f"every expression in {serialize(ind)!r} is degenerate")
    return np.column_stack(cols)


def combine(head: Expression, op: Operator, tail: Expression | None = None) -> Expression:
    """Cross two expressions with a binary operator (tail ignored for unary)."""
    if op.arity == 1:
        return Expression(head.tokens + (Token.op(op),))
    return Expression(head.tokens + tail.tokens + (Token.op(op),))

