from typing import Sequence

import numpy as np

from ..schemas.detection import (
    SCORE_ORDER,
    AggregationMode,
    ClassLabel,
    ClusterCounts,
    ClusterMetrics,
    ConfusionCounts,
    PatchMetrics,
)
from ..utils.error_handler import CountsValidationError, handle_error_helper


def _ratio(numerator: int, denominator: int) -> float | None:
    return numerator / denominator if denominator else None


def patch_metrics(
    counts: ConfusionCounts, total: int | None = None
) -> PatchMetrics:
    """
    Accuracy, balanced accuracy, precision, recall and true negative rate
    of one class. Ratios with a zero denominator are None.

    Raises:
        CountsValidationError: If `total` is given and the four counts do
            not add up to it.
    """
    if total is not None and counts.total != total:
        handle_error_helper(
            CountsValidationError,
            f"{counts.label.title}: TP+FP+TN+FN = {counts.total}, "
            f"expected {total}",
        )
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    tnr = _ratio(counts.tn, counts.tn + counts.fp)
    bacc = (
        (recall + tnr) / 2 if recall is not None and tnr is not None else None
    )
    return PatchMetrics(
        label=counts.label,
        acc=_ratio(counts.tp + counts.tn, counts.total),
        bacc=bacc,
        precision=_ratio(counts.tp, counts.tp + counts.fp),
        recall=recall,
        tnr=tnr,
    )


def cluster_metrics(counts: ClusterCounts) -> ClusterMetrics:
    return ClusterMetrics(
        acc=_ratio(counts.t_gc, counts.gc),
        precision=_ratio(counts.t_gc, counts.t_gc + counts.f_gc),
        recall=_ratio(counts.t_gc, counts.t_gc + counts.n_gc),
    )


def confusion_from_labels(
    truth: Sequence[ClassLabel], predicted: Sequence[ClassLabel]
) -> list[ConfusionCounts]:
    """One-vs-rest confusion counts per class, in score order."""
    if len(truth) != len(predicted):
        handle_error_helper(
            CountsValidationError,
            f"{len(truth)} true labels but {len(predicted)} predictions",
        )
    truth_array = np.asarray(truth, dtype=np.int64)
    predicted_array = np.asarray(predicted, dtype=np.int64)
    result = []
    for label in SCORE_ORDER:
        actual = truth_array == label
        guessed = predicted_array == label
        result.append(
            ConfusionCounts(
                label=label,
                tp=int(np.sum(actual & guessed)),
                fp=int(np.sum(~actual & guessed)),
                tn=int(np.sum(~actual & ~guessed)),
                fn=int(np.sum(actual & ~guessed)),
            )
        )
    return result


def _mean_defined(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def aggregate_cluster_metrics(
    per_image: Sequence[ClusterCounts],
    mode: AggregationMode = AggregationMode.POOLED,
) -> ClusterMetrics:
    """
    Corpus-level cluster metrics, either from pooled counts or as the
    mean of per-image metrics (undefined per-image values are skipped).
    """
    if mode is AggregationMode.POOLED:
        return cluster_metrics(
            ClusterCounts(
                gc=sum(c.gc for c in per_image),
                t_gc=sum(c.t_gc for c in per_image),
                f_gc=sum(c.f_gc for c in per_image),
                n_gc=sum(c.n_gc for c in per_image),
            )
        )
    metrics = [cluster_metrics(c) for c in per_image]
    return ClusterMetrics(
        acc=_mean_defined([m.acc for m in metrics]),
        precision=_mean_defined([m.precision for m in metrics]),
        recall=_mean_defined([m.recall for m in metrics]),
    )
