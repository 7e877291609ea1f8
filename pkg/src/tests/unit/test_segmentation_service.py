from unittest.mock import patch

import numpy as np
import pytest

from src.app.pipeline.schemas.geometry import ColoredPointCloud
from src.app.pipeline.schemas.segmentation import (
    HeightComparison,
    SegmentationParams,
)
from src.app.pipeline.services.segmentation_service import (
    grvi,
    grvi_array,
    initial_centroids,
    kmeans_plants,
    label_canopy,
    run_kmeans,
    segment_row,
)
from src.app.pipeline.utils.error_handler import (
    InsufficientPointsError,
    ParameterError,
)

GREEN = (60, 140, 50)
RED = (130, 85, 50)


@pytest.fixture
def mock_logger():
    with patch(
        "src.app.pipeline.services.segmentation_service.logger"
    ) as mock:
        yield mock


@pytest.fixture
def two_blobs():
    rng = np.random.default_rng(11)
    return np.vstack(
        [
            rng.normal([0.0, 0.0, 1.0], 0.05, size=(150, 3)),
            rng.normal([0.0, 0.9, 1.0], 0.05, size=(100, 3)),
        ]
    )


@pytest.mark.parametrize(
    "r, g, expected",
    [(60, 140, 0.4), (140, 60, -0.4), (0, 0, 0.0), (0, 10, 1.0)],
)
def test_when_grvi_is_success(r, g, expected):
    assert grvi(r, g) == pytest.approx(expected)


def test_when_grvi_is_failure():
    with pytest.raises(ParameterError):
        grvi(-1, 2)


def test_grvi_array_matches_scalar():
    colors = np.array([[60, 140, 50], [0, 0, 9], [255, 0, 0]])

    values = grvi_array(colors)

    assert values.tolist() == pytest.approx([0.4, 0.0, -1.0])


def test_when_label_canopy_is_success(mock_logger):
    cloud = ColoredPointCloud(
        positions=[
            # cell (0, 0, 0): 3 of 4 points green, low
            [0.01, 0.01, 0.05],
            [0.02, 0.02, 0.05],
            [0.03, 0.03, 0.05],
            [0.04, 0.04, 0.05],
            # green but 1 m high
            [0.01, 0.01, 1.05],
            # 2 of 3 points green
            [0.51, 0.01, 0.05],
            [0.52, 0.01, 0.05],
            [0.53, 0.01, 0.05],
        ],
        colors=[GREEN, GREEN, GREEN, RED, GREEN, GREEN, GREEN, RED],
    )

    labeling = label_canopy(cloud, params=SegmentationParams(cell_side=0.1))

    # the whole cell is labeled, including its red point
    assert labeling.flags.tolist() == [1, 1, 1, 1, 0, 0, 0, 0]
    assert labeling.canopy_indices.tolist() == [0, 1, 2, 3]
    mock_logger.info.assert_called_once()


def test_label_canopy_height_comparison_above():
    cloud = ColoredPointCloud(
        positions=[[0.01, 0.01, 0.05], [0.01, 0.01, 1.05]],
        colors=[GREEN, GREEN],
    )
    params = SegmentationParams(
        th_h=0.5, height_comparison=HeightComparison.ABOVE
    )

    labeling = label_canopy(cloud, params=params)

    assert labeling.flags.tolist() == [False, True]


def test_label_canopy_uses_ground_height():
    cloud = ColoredPointCloud(positions=[[0, 0, 2.05]], colors=[GREEN])

    assert label_canopy(cloud, ground_height=2.0).flags.tolist() == [True]
    assert label_canopy(cloud).flags.tolist() == [False]
    assert len(label_canopy(ColoredPointCloud.empty())) == 0


def test_comb_starts_at_the_first_point_along_the_row():
    points = np.array([[0.0, 0.0, 1.0], [0.0, 4.0, 1.0]])
    axis = np.array([0.0, 1.0, 0.0])

    first = initial_centroids(points, 2, axis, 0.9)
    centred = initial_centroids(points, 2, axis, 0.9, centre_comb=True)

    assert np.allclose(first, [[0.0, 0.0, 1.0], [0.0, 0.9, 1.0]])
    assert np.allclose(centred, [[0.0, 1.55, 1.0], [0.0, 2.45, 1.0]])


def test_when_run_kmeans_is_success(two_blobs):
    result = run_kmeans(two_blobs, 2, spacing=0.9)

    assert result.converged
    order = np.argsort(result.centroids[:, 1])
    assert np.allclose(
        result.centroids[order], [[0, 0, 1], [0, 0.9, 1]], atol=0.05
    )
    assert np.bincount(result.assignments).tolist() == [150, 100]
    history = np.array(result.inertia_history)
    assert np.all(np.diff(history) <= 1e-9)


def test_when_run_kmeans_is_failure(two_blobs):
    with pytest.raises(InsufficientPointsError):
        run_kmeans(two_blobs[:2], 3)
    with pytest.raises(ParameterError):
        run_kmeans(two_blobs, 0)
    with pytest.raises(ParameterError):
        run_kmeans(two_blobs, 2, row_axis=(0, 0, 0))


def test_run_kmeans_stops_at_iteration_cap(mock_logger, two_blobs):
    result = run_kmeans(two_blobs, 5, spacing=0.05, max_iterations=1)

    assert result.iterations == 1
    assert len(result.inertia_history) == 2


def test_kmeans_plants_reports_cloud_indices(two_blobs):
    indices = np.arange(len(two_blobs)) + 1000

    clusters = kmeans_plants(two_blobs, 2, point_indices=indices)

    assert [c.cluster_id for c in clusters] == [0, 1]
    assert sum(c.size for c in clusters) == len(two_blobs)
    assert min(c.indices.min() for c in clusters) == 1000
    first = min(clusters, key=lambda c: c.centroid.y)
    assert first.centroid.y == pytest.approx(0.0, abs=0.05)


def test_when_segment_row_is_success(two_blobs):
    colors = np.tile(GREEN, (len(two_blobs), 1))
    cloud = ColoredPointCloud(positions=two_blobs, colors=colors)
    params = SegmentationParams(
        th_h=0.5, height_comparison=HeightComparison.ABOVE
    )

    result = segment_row(cloud, 2, params)

    assert result.labeling.flags.all()
    assert len(result.clusters) == 2
    assert result.grvi == pytest.approx(np.full(len(two_blobs), 0.4))
