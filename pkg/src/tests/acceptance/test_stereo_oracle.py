import time

import numpy as np
import pytest

from src.app.pipeline.schemas.stereo import (
    DisparityRange,
    StereoCalibration,
    StereoParams,
)
from src.app.pipeline.services.stereo_service import (
    compute_disparity,
    depth_range,
)
from src.app.pipeline.services.synth_service import (
    generate_stereo_pair,
    make_texture,
)

PARAMS = StereoParams(disparity_range=DisparityRange(d_min=8, d_max=40))
MARGIN = 3


def _score(disparity: np.ndarray, truth, usable: np.ndarray):
    """Density of the output over usable truth pixels and the share of
    pixels within half a pixel among those valid in both."""
    reference = usable & truth.valid
    both = reference & np.isfinite(disparity)
    error = np.abs(disparity[both] - truth.disparity[both])
    return both.sum() / reference.sum(), np.mean(error <= 0.5)


@pytest.mark.parametrize("d", [12.0, 30.0])
def test_constant_disparity_is_recovered(d):
    texture = make_texture((120, 160), seed=21)
    pair, truth = generate_stereo_pair(texture, d, seed=21)

    disparity = compute_disparity(pair, PARAMS).values

    usable = np.zeros_like(truth.valid)
    usable[MARGIN:-MARGIN, int(d) + MARGIN : -MARGIN] = True
    density, accurate = _score(disparity, truth, usable)
    assert density >= 0.85
    assert accurate >= 0.95


def test_two_planes_are_recovered():
    texture = make_texture((120, 160), seed=22)
    truth_map = np.full((120, 160), 12.0)
    truth_map[60:] = 30.0
    pair, truth = generate_stereo_pair(texture, truth_map, seed=22)

    disparity = compute_disparity(pair, PARAMS).values

    usable = np.zeros_like(truth.valid)
    usable[MARGIN:-MARGIN, 30 + MARGIN : -MARGIN] = True
    # rows next to the depth step see both planes in their census window
    usable[60 - 2 * MARGIN : 60 + 2 * MARGIN] = False
    density, accurate = _score(disparity, truth, usable)
    assert density >= 0.85
    assert accurate >= 0.95
    assert np.nanmedian(disparity[10:50, 60:150]) == pytest.approx(12, abs=0.5)
    assert np.nanmedian(disparity[70:110, 60:150]) == pytest.approx(
        30, abs=0.5
    )


def test_disparity_window_maps_to_working_depths():
    calib = StereoCalibration.from_field_of_view(640, 480, 60.0, 0.072)

    near, far = depth_range(DisparityRange(d_min=8, d_max=40), calib)

    assert calib.focal_length == pytest.approx(554.26, abs=0.01)
    assert near == pytest.approx(1.0, rel=0.15)
    assert far == pytest.approx(5.5, rel=0.15)


def test_full_frame_is_matched_within_ten_seconds():
    texture = make_texture((480, 640), seed=23)
    pair, _ = generate_stereo_pair(texture, 20.0, seed=23)

    start = time.perf_counter()
    disparity = compute_disparity(pair, PARAMS)
    elapsed = time.perf_counter() - start

    assert disparity.values.shape == (480, 640)
    assert elapsed < 10.0
