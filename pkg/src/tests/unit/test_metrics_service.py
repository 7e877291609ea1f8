import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.app.pipeline.schemas.detection import (
    AggregationMode,
    ClassLabel,
    ClusterCounts,
    ConfusionCounts,
)
from src.app.pipeline.services.metrics_service import (
    aggregate_cluster_metrics,
    cluster_metrics,
    confusion_from_labels,
    patch_metrics,
)
from src.app.pipeline.utils.error_handler import CountsValidationError

counts = st.integers(min_value=0, max_value=10_000)


def test_when_patch_metrics_is_success():
    table = ConfusionCounts(label=ClassLabel.BUNCH, tp=9, fp=1, tn=89, fn=1)

    metrics = patch_metrics(table, total=100)

    assert metrics.acc == pytest.approx(0.98, abs=1e-9)
    assert metrics.bacc == pytest.approx(0.944444, abs=1e-6)
    assert metrics.precision == pytest.approx(0.9, abs=1e-9)
    assert metrics.recall == pytest.approx(0.9, abs=1e-9)
    assert metrics.tnr == pytest.approx(0.988889, abs=1e-6)


def test_when_patch_metrics_is_failure():
    table = ConfusionCounts(label=ClassLabel.POLE, tp=9, fp=1, tn=89, fn=1)

    with pytest.raises(CountsValidationError):
        patch_metrics(table, total=99)


def test_patch_metrics_marks_undefined_ratios():
    table = ConfusionCounts(label=ClassLabel.WOOD, tp=0, fp=0, tn=10, fn=0)

    metrics = patch_metrics(table)

    assert metrics.precision is None
    assert metrics.recall is None
    assert metrics.bacc is None
    assert metrics.tnr == 1.0
    assert metrics.acc == 1.0


@settings(max_examples=500)
@given(tp=counts, fp=counts, tn=counts, fn=counts)
def test_balanced_accuracy_is_mean_of_recall_and_tnr(tp, fp, tn, fn):
    table = ConfusionCounts(label=ClassLabel.BUNCH, tp=tp, fp=fp, tn=tn, fn=fn)

    metrics = patch_metrics(table)

    if metrics.recall is not None and metrics.tnr is not None:
        assert metrics.bacc == pytest.approx(
            (metrics.recall + metrics.tnr) / 2
        )
        assert 0.0 <= metrics.bacc <= 1.0


@given(t=counts, f=counts, n=counts)
def test_cluster_recall_equals_accuracy(t, f, n):
    metrics = cluster_metrics(ClusterCounts(gc=t + n, t_gc=t, f_gc=f, n_gc=n))

    assert metrics.recall == metrics.acc


def test_when_cluster_metrics_is_success():
    metrics = cluster_metrics(ClusterCounts(gc=10, t_gc=8, f_gc=2, n_gc=2))

    assert (metrics.acc, metrics.precision, metrics.recall) == (
        0.8,
        0.8,
        0.8,
    )


def test_cluster_counts_must_add_up():
    with pytest.raises(CountsValidationError):
        ClusterCounts(gc=10, t_gc=8, f_gc=0, n_gc=1)


def test_when_confusion_from_labels_is_success():
    truth = [ClassLabel.BUNCH, ClassLabel.BUNCH, ClassLabel.LEAVES]
    predicted = [ClassLabel.BUNCH, ClassLabel.LEAVES, ClassLabel.LEAVES]

    tables = confusion_from_labels(truth, predicted)

    assert [t.label for t in tables] == [
        ClassLabel.BUNCH,
        ClassLabel.POLE,
        ClassLabel.WOOD,
        ClassLabel.LEAVES,
        ClassLabel.BACKGROUND,
    ]
    bunch, leaves = tables[0], tables[3]
    assert (bunch.tp, bunch.fp, bunch.tn, bunch.fn) == (1, 0, 1, 1)
    assert (leaves.tp, leaves.fp, leaves.tn, leaves.fn) == (1, 1, 1, 0)
    assert all(t.total == 3 for t in tables)


def test_when_confusion_from_labels_is_failure():
    with pytest.raises(CountsValidationError):
        confusion_from_labels([ClassLabel.BUNCH], [])


def test_aggregate_cluster_metrics_modes():
    per_image = [
        ClusterCounts(gc=4, t_gc=4, f_gc=0, n_gc=0),
        ClusterCounts(gc=1, t_gc=0, f_gc=1, n_gc=1),
        ClusterCounts(gc=0, t_gc=0, f_gc=0, n_gc=0),
    ]

    pooled = aggregate_cluster_metrics(per_image)
    mean = aggregate_cluster_metrics(per_image, AggregationMode.MEAN)

    assert pooled.acc == pytest.approx(0.8)
    assert pooled.precision == pytest.approx(0.8)
    # the empty image has no defined accuracy and is skipped
    assert mean.acc == pytest.approx(0.5)
    assert mean.precision == pytest.approx(0.5)
