"""Few-shot prompts and the sequence generator backends."""
from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from .expr import DEFAULT_OPERATORS, OperatorSet

logger = logging.getLogger(__name__)

OUTPUT_MARKER = "### SEQUENCE:"
DEFAULT_MODEL = "Llama-2-13B-chat-hf"
DEFAULT_TASK = ("Generate a better set of features for a tabular prediction task by "
                "combining the original features with mathematical operators.")
URL_ENV = "FEATFORGE_LLM_URL"
KEY_ENV = "FEATFORGE_LLM_KEY"

_LABEL_RE = re.compile(r"^priority_v(\d+):\s*$")


class PromptTooLong(ValueError):
    pass


class BackendError(RuntimeError):
    pass


class BackendTimeout(BackendError):
    pass


class HttpError(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class NoSequenceFound(ValueError):
    pass


# --- prompts ------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptContext:
    demonstrations: tuple[str, ...]
    n_features: int
    operators: tuple[str, ...] = tuple(op.token for op in DEFAULT_OPERATORS)
    task_description: str = DEFAULT_TASK
    output_marker: str = OUTPUT_MARKER
    max_prompt_chars: int = 16000

    @property
    def labels(self) -> list[str]:
        return [f"priority_v{i}" for i in range(len(self.demonstrations))]


def build_prompt(ctx: PromptContext) -> str:
    if not ctx.demonstrations:
        raise ValueError("a prompt needs at least one demonstration")
    features = ", ".join(f"f{i}" for i in range(ctx.n_features))
    lines = [
        ctx.task_description,
        "A feature transformation sequence lists generated features separated by \", \". "
        "Each feature is a postfix (reverse Polish) expression whose tokens are "
        "separated by single spaces.",
        f"Operators: {' '.join(ctx.operators)}",
        f"Feature IDs: {features}",
        "The examples below are ranked by downstream performance in ascending order: "
        "priority_v0 is the weakest and the last one is the strongest.",
        f"Write your answer as exactly one sequence on a single line directly after "
        f"\"{ctx.output_marker}\".",
        "",
    ]
    for label, demo in zip(ctx.labels, ctx.demonstrations):
        lines.append(f"{label}:")
        lines.append(demo)
    lines.append("")
    lines.append(f"Generate one new sequence that improves on the examples. "
                 f"{ctx.output_marker}")
    text = "\n".join(lines)
    if len(text) > ctx.max_prompt_chars:
        raise PromptTooLong(f"prompt has {len(text)} chars (limit {ctx.max_prompt_chars})")
    return text


def parse_prompt(prompt: str) -> tuple[list[str], int, list[str]]:
    """Recover (demonstrations, n_features, operator tokens) from a built prompt."""
    demos, n_features, ops = [], 0, []
    lines = prompt.splitlines()
    for i, line in enumerate(lines):
        if line.startswith("Operators: "):
            ops = line[len("Operators: "):].split()
        elif line.startswith("Feature IDs: "):
            n_features = len(line[len("Feature IDs: "):].split(","))
        elif _LABEL_RE.match(line) and i + 1 < len(lines):
            demos.append(lines[i + 1].strip())
    return demos, n_features, ops


# --- extraction -----------------------------------------------------------------------

def _sequence_regex(op_tokens: Sequence[str]) -> re.Pattern:
    ops = "|".join(re.escape(t) for t in sorted(op_tokens, key=len, reverse=True))
    tok = rf"(?:f\d+|{ops})"
    expr = rf"f\d+(?: {tok})*"
    return re.compile(rf"(?<![\w]){expr}(?:, {expr})*(?![\w])")


def extract_sequence(raw: str, marker: str = OUTPUT_MARKER,
                     operators: OperatorSet = DEFAULT_OPERATORS) -> str:
    """Pull the answer out of free-form generator text.

    Text after the first marker, up to a blank line, wins; without a marker the
    longest grammar-conforming substring is used.
    """
    pos = raw.find(marker)
    if pos >= 0:
        tail = raw[pos + len(marker):].lstrip()
        block = re.split(r"\n\s*\n", tail, maxsplit=1)[0]
        text = " ".join(block.split()).strip("`'\" ")
        if text:
            return text
    tokens = [t for op in operators for t in {op.name, op.token}]
    matches = [m.group(0) for m in _sequence_regex(tokens).finditer(raw)]
    if not matches:
        raise NoSequenceFound("no feature transformation sequence in generator output")
    return max(matches, key=len)


# --- backends -------------------------------------------------------------------------

class Backend(Protocol):
    def generate(self, prompt: str) -> str: ...


@dataclass
class MockEvolver:
    """Offline generator: crossover of the two top-ranked demonstrations plus
    arity-preserving token mutation.  Always emits a stack-balanced sequence."""

    seed: int = 0
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    marker: str = OUTPUT_MARKER
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.mutation_rate <= 1 or not 0 <= self.crossover_rate <= 1:
            raise ValueError("rates must lie in [0, 1]")
        self.rng = np.random.default_rng(self.seed)

    def _mutate(self, expr: list[str], n_features: int, unary: list[str],
                binary: list[str]) -> list[str]:
        out = []
        for tok in expr:
            if self.rng.random() < self.mutation_rate:
                if tok.startswith("f") and tok[1:].isdigit():
                    tok = f"f{self.rng.integers(n_features)}"
                elif tok in binary:
                    tok = binary[self.rng.integers(len(binary))]
                elif tok in unary:
                    tok = unary[self.rng.integers(len(unary))]
            out.append(tok)
        return out

    def generate(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("empty prompt")
        demos, n_features, op_tokens = parse_prompt(prompt)
        if not demos:
            raise MalformedResponse("prompt carries no demonstrations")
        arity = {op.token: op.arity for op in DEFAULT_OPERATORS}
        for op in DEFAULT_OPERATORS:
            arity.setdefault(op.name, op.arity)
        unary = [t for t in op_tokens if arity.get(t) == 1]
        binary = [t for t in op_tokens if arity.get(t) == 2]

        parent_a = [e.split() for e in demos[-1].split(",")]
        parent_b = [e.split() for e in demos[-2].split(",")] if len(demos) > 1 else parent_a
        child = parent_a
        if self.rng.random() < self.crossover_rate:
            cut = int(self.rng.integers(1, len(parent_a) + 1))
            child = parent_a[:cut] + parent_b[cut:]
        if n_features > 0:
            child = [self._mutate(e, n_features, unary, binary) for e in child]
        text = ", ".join(" ".join(e) for e in child)
        return f"{self.marker} {text}"


@dataclass
class RemoteLLM:
    """OpenAI-compatible chat-completions client."""

    base_url: str | None = None
    model: str = DEFAULT_MODEL
    temperature: float = 0.8
    max_tokens: int = 256
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 1.0
    api_key: str | None = None

    def __post_init__(self):
        self.base_url = (self.base_url or os.environ.get(URL_ENV, "")).rstrip("/")
        if not self.base_url:
            raise ValueError(f"no endpoint configured; set {URL_ENV}")
        if self.api_key is None:
            self.api_key = os.environ.get(KEY_ENV, "")

    def _request(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens}
        try:
            resp = requests.post(f"{self.base_url}/chat/completions", json=body,
                                 headers=headers, timeout=self.timeout)
        except requests.Timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise HttpError(str(exc)) from exc
        if resp.status_code >= 400:
            raise HttpError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {resp.text[:500]}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("message content is not text")
        return content

    def generate(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("empty prompt")
        for attempt in range(self.retries + 1):
            try:
                return self._request(prompt)
            except (BackendTimeout, HttpError) as exc:
                if attempt == self.retries:
                    raise
                wait = self.backoff * 2 ** attempt
                logger.warning("generator request failed (%s); retrying in %.1fs", exc, wait)
                time.sleep(wait)
        raise AssertionError("unreachable")
