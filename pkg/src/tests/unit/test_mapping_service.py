from unittest.mock import patch

import numpy as np
import pytest

from src.app.pipeline.schemas.geometry import ColoredPointCloud, RigidTransform
from src.app.pipeline.schemas.mapping import (
    FramePose,
    OutlierStage,
    ReconstructionParams,
)
from src.app.pipeline.schemas.synth import CameraRig, SyntheticRowSpec
from src.app.pipeline.services.mapping_service import (
    map_checksum,
    merge_into_map,
    pair_frames_with_poses,
    reconstruct_frame,
    select_points,
    stitch_frames,
)
from src.app.pipeline.services.synth_service import (
    generate_row,
    render_stereo_frames,
)
from src.app.pipeline.utils.error_handler import (
    EmptyInputError,
    ParameterError,
)


def _pose(index: int, y: float = 0.0) -> FramePose:
    return FramePose(
        frame_index=index,
        pose=RigidTransform(rotation=np.eye(3), translation=[0.0, y, 0.0]),
    )


def _cloud(positions, value: int = 100) -> ColoredPointCloud:
    positions = np.asarray(positions, dtype=float)
    return ColoredPointCloud(
        positions=positions,
        colors=np.full((len(positions), 3), value),
        frame_id="vehicle",
    )


@pytest.fixture
def mock_logger():
    with patch("src.app.pipeline.services.mapping_service.logger") as mock:
        yield mock


def test_when_stitch_frames_is_success(mock_logger):
    first = _cloud([[1.0, 0.0, 0.5], [1.0, 0.2, 0.5]], 10)
    second = _cloud([[1.0, 0.0, 0.5], [1.0, 0.5, 0.5]], 30)

    row = stitch_frames([(first, _pose(0)), (second, _pose(1, 0.2))], 0.01)

    assert row.frame_count == 2
    assert row.cloud.frame_id == "map"
    # (1, 0.2, 0.5) is seen by both frames and merged into one point
    assert len(row.cloud) == 3
    assert np.allclose(
        row.cloud.positions[:2], [[1.0, 0.0, 0.5], [1.0, 0.7, 0.5]]
    )
    assert row.cloud.colors[2].tolist() == [20, 20, 20]
    mock_logger.info.assert_called_once()


def test_merge_with_disjoint_clouds_concatenates():
    a = _cloud([[0, 0, 0], [1, 1, 1]])
    b = _cloud([[5, 5, 5], [6, 6, 6]])

    merged = merge_into_map(a, b, 0.01)

    expected = np.vstack([a.positions, b.positions])
    assert np.array_equal(merged.positions, expected)


@pytest.mark.parametrize(
    "frames, merge_cell, error",
    [
        ([], 0.01, EmptyInputError),
        ([(_cloud([[0, 0, 0]]), _pose(0))], 0.0, ParameterError),
        (
            [
                (_cloud([[0, 0, 0]]), _pose(1)),
                (_cloud([[1, 1, 1]]), _pose(1)),
            ],
            0.01,
            ParameterError,
        ),
    ],
)
def test_when_stitch_frames_is_failure(frames, merge_cell, error):
    with pytest.raises(error):
        stitch_frames(frames, merge_cell)


def test_when_pair_frames_with_poses_is_failure():
    clouds = {0: _cloud([[0, 0, 0]]), 4: _cloud([[1, 1, 1]])}

    with pytest.raises(ParameterError) as e:
        pair_frames_with_poses(clouds, [_pose(0), _pose(1)])

    assert "4" in e.value.message


def test_pair_frames_with_poses_sorts_by_index():
    clouds = {2: _cloud([[2, 2, 2]]), 0: _cloud([[0, 0, 0]])}

    pairs = pair_frames_with_poses(clouds, [_pose(0), _pose(2)])

    assert [pose.frame_index for _, pose in pairs] == [0, 2]


def test_map_checksum_tracks_content():
    a = _cloud([[0, 0, 0], [1, 1, 1]])

    assert map_checksum(a) == map_checksum(_cloud([[0, 0, 0], [1, 1, 1]]))
    assert map_checksum(a) != map_checksum(_cloud([[0, 0, 0], [1, 1, 2]]))


def test_select_points_applies_band_only_at_frame_stage():
    cloud = _cloud([[0.1, 0, 0], [1.0, 0, 0], [4.0, 0, 0]])
    params = ReconstructionParams(outlier_k=10)

    at_frame = select_points(cloud, params, OutlierStage.FRAME)
    at_map = select_points(cloud, params, OutlierStage.MAP)

    assert at_frame.positions[:, 0].tolist() == [1.0]
    assert len(at_map) == 3


def test_reconstruction_params_reject_inverted_band():
    with pytest.raises(ValueError):
        ReconstructionParams(lateral_min=2.0, lateral_max=1.0)


def test_when_reconstruct_frame_is_success():
    spec = SyntheticRowSpec(plant_count=2, density=8000.0, ground_density=0)
    rig = CameraRig()
    bundle = generate_row(spec)
    frame = render_stereo_frames(bundle, rig, rig.poses(spec)[:2])[1]

    result = reconstruct_frame(
        frame.frame_index, frame.pair, frame.color, rig.calibration()
    )

    assert result.frame_index == 1
    assert result.triangulated > len(result.cloud) > 0
    assert result.cloud.frame_id == "vehicle"
    lateral = result.cloud.positions[:, 0]
    assert lateral.min() >= 0.5 and lateral.max() <= 3.0
    assert 0.0 <= result.invalid_fraction < 1.0
