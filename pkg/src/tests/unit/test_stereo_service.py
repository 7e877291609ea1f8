import math

import numpy as np
import pytest

from src.app.pipeline.schemas.stereo import (
    DisparityMap,
    DisparityRange,
    RectifiedStereoPair,
    StereoCalibration,
    StereoParams,
)
from src.app.pipeline.services.stereo_service import (
    build_cost_volume,
    census_transform,
    compute_disparity,
    defined_costs,
    depth_range,
    disparity_to_depth,
    hamming_distance,
    invalid_fraction,
    neutral_costs,
    sgm_aggregate,
    triangulate_color_cloud,
)
from src.app.pipeline.services.synth_service import make_texture
from src.app.pipeline.utils.error_handler import (
    ConfigurationError,
    InvalidDisparityError,
    ParameterError,
)

WTA = dict(
    p1=math.inf,
    p2=math.inf,
    subpixel=False,
    lr_check=False,
    uniqueness=False,
)


@pytest.fixture
def shifted_pair():
    """Right view is the left texture moved 12 px to the left."""
    texture = make_texture((40, 90), seed=5)
    right = np.zeros_like(texture)
    right[:, :-12] = texture[:, 12:]
    return RectifiedStereoPair(left=texture, right=right)


def test_when_census_transform_is_success():
    image = np.arange(25, dtype=np.uint8).reshape(5, 5)

    census = census_transform(image, window=3)

    assert census.n_bits == 8
    assert census.bits(2, 2) == (1, 1, 1, 1, 0, 0, 0, 0)
    assert not census.valid[0, 0]
    assert census.valid[1:4, 1:4].all()


@pytest.mark.parametrize("window", [2, 4, 9, 1])
def test_when_census_transform_is_failure(window):
    with pytest.raises(ParameterError):
        census_transform(np.zeros((20, 20), dtype=np.uint8), window)


def test_census_rejects_images_smaller_than_window():
    with pytest.raises(ParameterError):
        census_transform(np.zeros((5, 40), dtype=np.uint8), 5)


def test_hamming_distance():
    a = np.array([0b1011, 0], dtype=np.uint64)
    b = np.array([0b0001, 2**47], dtype=np.uint64)

    assert hamming_distance(a, b).tolist() == [2, 1]


def test_cost_volume_marks_undefined_matches(shifted_pair):
    volume = build_cost_volume(shifted_pair, DisparityRange(d_min=8, d_max=20))

    assert volume.costs.shape == (40, 90, 13)
    assert np.all(volume.costs[:, :8, :] == volume.max_cost)
    assert np.all(volume.costs[:2, :, :] == volume.max_cost)
    assert volume.costs[20, 50, 12 - 8] == 0


def test_winner_take_all_recovers_a_shift(shifted_pair):
    params = StereoParams(
        disparity_range=DisparityRange(d_min=8, d_max=20), **WTA
    )

    disparity = compute_disparity(shifted_pair, params)

    # left of column 14 the true match falls outside the right image
    seen = disparity.values[:, 14:]
    valid = seen[np.isfinite(seen)]
    assert valid.size > 0.5 * seen.size
    assert np.all(valid == 12)


def test_sgm_checks_invalidate_but_never_corrupt(shifted_pair):
    params = StereoParams(disparity_range=DisparityRange(d_min=8, d_max=20))

    disparity = compute_disparity(shifted_pair, params)

    interior = disparity.values[5:-5, 30:-30]
    assert np.isfinite(interior).mean() > 0.9
    assert np.nanmax(np.abs(interior - 12)) <= 0.5


def test_neutral_costs_fill_undefined_with_pixel_mean(shifted_pair):
    volume = build_cost_volume(shifted_pair, DisparityRange(d_min=8, d_max=20))

    defined = defined_costs(volume)
    costs = neutral_costs(volume)

    assert np.array_equal(costs[defined], volume.costs[defined])
    # at column 15 only disparities 8..13 reach a defined right descriptor
    assert defined[20, 15].tolist() == [True] * 6 + [False] * 7
    pixel_mean = volume.costs[20, 15, :6].mean()
    assert np.allclose(costs[20, 15, 6:], pixel_mean)
    assert np.all(costs[:, :2] == volume.max_cost)


def test_textureless_pair_is_mostly_invalidated():
    flat = np.full((60, 80), 128, dtype=np.uint8)
    pair = RectifiedStereoPair(left=flat, right=flat.copy())

    disparity = compute_disparity(pair, StereoParams())

    assert invalid_fraction(disparity) > 0.5


def test_when_sgm_aggregate_is_failure(shifted_pair):
    volume = build_cost_volume(shifted_pair, DisparityRange(d_min=8, d_max=20))

    with pytest.raises(ParameterError):
        sgm_aggregate(volume, p1=50.0, p2=10.0)


def test_when_disparity_to_depth_is_success():
    calib = StereoCalibration(focal_length=500.0, baseline=0.1, cx=0, cy=0)

    assert disparity_to_depth(10.0, calib) == pytest.approx(5.0)
    near, far = depth_range(DisparityRange(d_min=0, d_max=25), calib)
    assert near == pytest.approx(2.0)
    assert math.isinf(far)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_when_disparity_to_depth_is_failure(d):
    calib = StereoCalibration(focal_length=500.0, baseline=0.1, cx=0, cy=0)

    with pytest.raises(InvalidDisparityError):
        disparity_to_depth(d, calib)


def test_when_triangulate_color_cloud_is_success():
    values = np.full((11, 11), np.nan)
    values[5, 5] = 10.0
    values[5, 7] = 20.0
    disparity = DisparityMap(values=values, disparity_range=DisparityRange())
    pair = RectifiedStereoPair(
        left=np.zeros((11, 11)), right=np.zeros((11, 11))
    )
    color = np.zeros((11, 11, 3), dtype=np.uint8)
    color[5, 5] = (10, 200, 30)
    calib = StereoCalibration(focal_length=100.0, baseline=0.1, cx=5, cy=5)

    cloud = triangulate_color_cloud(disparity, pair, color, calib)

    assert len(cloud) == 2
    assert np.allclose(cloud.positions[0], [0.0, 0.0, 1.0])
    assert np.allclose(cloud.positions[1], [0.01, 0.0, 0.5])
    assert cloud.colors[0].tolist() == [10, 200, 30]
    assert invalid_fraction(disparity) == pytest.approx(1 - 2 / 121)


def test_when_triangulate_color_cloud_is_failure():
    disparity = DisparityMap.invalid(4, 4, DisparityRange())
    pair = RectifiedStereoPair(left=np.zeros((5, 5)), right=np.zeros((5, 5)))

    with pytest.raises(ConfigurationError):
        triangulate_color_cloud(disparity, pair, np.zeros((5, 5, 3)), None)
    with pytest.raises(ParameterError):
        triangulate_color_cloud(
            disparity,
            pair,
            np.zeros((5, 5, 3)),
            StereoCalibration(focal_length=1.0, baseline=1.0, cx=0, cy=0),
        )


def test_stereo_pair_rejects_mismatched_sizes():
    with pytest.raises(ValueError):
        RectifiedStereoPair(left=np.zeros((4, 4)), right=np.zeros((4, 5)))
    with pytest.raises(ValueError):
        DisparityRange(d_min=10, d_max=10)
