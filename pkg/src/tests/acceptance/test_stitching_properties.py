import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from src.app.pipeline.schemas.geometry import ColoredPointCloud, RigidTransform
from src.app.pipeline.schemas.mapping import FramePose
from src.app.pipeline.services.mapping_service import (
    merge_into_map,
    stitch_frames,
)
from src.app.pipeline.services.pointcloud_service import voxel_indices

CELL = 0.05


def _cloud(rng, size: int, offset: float) -> ColoredPointCloud:
    return ColoredPointCloud(
        positions=rng.random((size, 3)) + [0.0, offset, 0.0],
        colors=rng.integers(0, 256, (size, 3)),
        frame_id="map",
    )


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    sizes=st.tuples(st.integers(1, 300), st.integers(1, 300)),
    offset=st.floats(0.0, 1.5),
)
def test_merge_keeps_outside_points_and_merges_per_cell(seed, sizes, offset):
    rng = np.random.default_rng(seed)
    first, second = _cloud(rng, sizes[0], 0.0), _cloud(rng, sizes[1], offset)
    low = np.maximum(first.positions.min(0), second.positions.min(0))
    high = np.minimum(first.positions.max(0), second.positions.max(0))

    merged = merge_into_map(first, second, CELL)

    if np.any(low > high):
        assert len(merged) == len(first) + len(second)
        return
    outside = [
        c.positions[~np.all((c.positions >= low) & (c.positions <= high), 1)]
        for c in (first, second)
    ]
    kept = np.vstack(outside)
    assert np.array_equal(merged.positions[: len(kept)], kept)
    fused = merged.positions[len(kept) :]
    cells = voxel_indices(fused, CELL)
    assert len(np.unique(cells, axis=0)) == len(fused)
    assert np.all((fused >= low - 1e-12) & (fused <= high + 1e-12))


# quarter turn about z, exact in floating point
QUARTER_TURN = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _frames(rng, count: int, step: float, world: RigidTransform):
    frames = []
    for index in range(count):
        pose = RigidTransform(
            rotation=np.eye(3), translation=[0.0, index * step, 0.0]
        )
        placed = FramePose(frame_index=index, pose=world.compose(pose))
        frames.append((_cloud(rng, 80, 0.0), placed))
    return frames


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    count=st.integers(2, 4),
    step=st.floats(0.2, 0.9),
    shift=st.tuples(*[st.integers(-40, 40)] * 3),
)
def test_stitching_commutes_with_a_global_rigid_motion(
    seed, count, step, shift
):
    world = RigidTransform(
        rotation=QUARTER_TURN, translation=np.array(shift) * CELL
    )
    identity = RigidTransform(rotation=np.eye(3), translation=[0.0] * 3)

    plain = stitch_frames(
        _frames(np.random.default_rng(seed), count, step, identity), CELL
    ).cloud
    moved = stitch_frames(
        _frames(np.random.default_rng(seed), count, step, world), CELL
    ).cloud

    assert len(moved) == len(plain)
    assert np.allclose(
        np.sort(pdist(moved.positions)),
        np.sort(pdist(plain.positions)),
        atol=1e-9,
    )
