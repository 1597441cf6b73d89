"""Generative feature-transformation search over postfix sequences."""
from .data import Dataset, FoldPlan, Task, load_csv, make_folds, synthetic_interaction
from .expr import (DEFAULT_OPERATORS, Expression, Individual, OperatorSet, Token, Vocabulary,
                   canonical_string, evaluate_expression, materialize, parse_postfix,
                   render_infix, serialize)
from .state import represent

__version__ = "0.1.0"
