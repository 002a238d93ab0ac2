"""Dataset construction, executors, splits, and evaluation metrics."""

from .metrics import (
    corpus_labeled_span_f1,
    denotation_accuracy,
    f1_from_counts,
    labeled_span_f1,
)
from .splits import (
    split_iid,
    split_length,
    split_scan_primitive,
    split_template,
)

__all__ = [
    "corpus_labeled_span_f1",
    "denotation_accuracy",
    "f1_from_counts",
    "labeled_span_f1",
    "split_iid",
    "split_length",
    "split_scan_primitive",
    "split_template",
]
