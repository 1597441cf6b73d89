"""Three-gate check on generated sequences: vocabulary, postfix form, novelty."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .database import Database
from .expr import (Individual, MalformedPostfix, UnknownToken, Vocabulary, canonical_string,
                   parse_postfix)


class Outcome(str, enum.Enum):
    VALID = "Valid"
    OUT_OF_VOCABULARY = "TokenOutOfVocabulary"
    MALFORMED = "MalformedPostfix"
    DUPLICATE = "Duplicate"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    individual: Individual | None = None
    truncated: bool = False

    @property
    def valid(self) -> bool:
        return self.outcome is Outcome.VALID


def verify(text: str, db: Database, vocab: Vocabulary,
           max_features: int | None = None) -> Verdict:
    """Check ``text`` in the fixed order vocabulary -> postfix -> novelty.

    Never raises for bad input; the database is only read.  Valid individuals
    longer than ``max_features`` are cut to that many expressions before the
    novelty check.
    """
    try:
        ind = parse_postfix(text or "", vocab, origin="generator")
    except UnknownToken:
        return Verdict(Outcome.OUT_OF_VOCABULARY)
    except MalformedPostfix:
        return Verdict(Outcome.MALFORMED)
    truncated = False
    if max_features is not None and len(ind) > max_features:
        ind = ind.truncated(max_features)
        truncated = True
    if canonical_string(ind) in db.seen:
        return Verdict(Outcome.DUPLICATE)
    return Verdict(Outcome.VALID, ind, truncated)
