import numpy as np
import pytest

from src.app.pipeline.schemas.segmentation import (
    HeightComparison,
    SegmentationParams,
)
from src.app.pipeline.schemas.synth import SyntheticRowSpec
from src.app.pipeline.services.segmentation_service import (
    kmeans_plants,
    label_canopy,
)
from src.app.pipeline.services.synth_service import generate_row

PARAMS = SegmentationParams(th_h=0.2, height_comparison=HeightComparison.ABOVE)


@pytest.fixture(scope="module")
def row():
    return generate_row(SyntheticRowSpec(plant_count=54, density=8000.0))


def test_canopy_labels_agree_with_construction(row):
    labeling = label_canopy(row.cloud, params=PARAMS)

    agreement = np.mean(labeling.flags == row.canopy_mask)
    assert agreement >= 0.99


def test_plants_are_recovered_along_the_row(row):
    labeling = label_canopy(row.cloud, params=PARAMS)
    indices = labeling.canopy_indices

    clusters = kmeans_plants(
        row.cloud.positions[indices], 54, spacing=0.9, point_indices=indices
    )

    centroids = np.array([c.centroid.as_array() for c in clusters])
    centroids = centroids[np.argsort(centroids[:, 1])]
    errors = np.linalg.norm(centroids - row.plant_centers, axis=1)
    assert errors.mean() < 0.1
    # every plant's points land in one cluster
    for cluster in clusters:
        plants = row.assignments[cluster.indices]
        owner = np.bincount(plants[plants >= 0]).argmax()
        assert np.mean(plants == owner) >= 0.95
