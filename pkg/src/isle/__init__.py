"""Resolution-scalable lossless image streams with AUROC-gated partial transfer."""

from .codestream import (
    Codestream,
    DecompositionPlan,
    decode_partial,
    encode,
    parse,
    plan_decompositions,
    serialize,
    truncate,
)
from .image_io import Image, LabelTable, read_labels_csv, read_pgm, write_labels_csv, write_pgm
from .optimizer import EvalReport, architecture_floor, select_optimal
from .scorer import ScorerSpec, score
from .stats import auroc, paired_t_test_one_tailed, shapiro_wilk

__version__ = "0.1.0"

__all__ = [
    "Codestream",
    "DecompositionPlan",
    "EvalReport",
    "Image",
    "LabelTable",
    "ScorerSpec",
    "architecture_floor",
    "auroc",
    "decode_partial",
    "encode",
    "paired_t_test_one_tailed",
    "parse",
    "plan_decompositions",
    "read_labels_csv",
    "read_pgm",
    "score",
    "select_optimal",
    "serialize",
    "shapiro_wilk",
    "truncate",
    "write_labels_csv",
    "write_pgm",
]
