import hashlib
from typing import Sequence

import numpy as np

from ...settings.logging import logger
from ..schemas.geometry import ColoredPointCloud
from ..schemas.mapping import (
    FramePose,
    FrameReconstruction,
    OutlierStage,
    ReconstructionParams,
    RowMap,
)
from ..schemas.stereo import (
    RectifiedStereoPair,
    StereoCalibration,
    StereoParams,
)
from ..utils.error_handler import (
    EmptyInputError,
    ParameterError,
    handle_error_helper,
)
from .pointcloud_service import (
    apply_transform,
    bounding_box,
    box_grid_filter,
    concatenate,
    intersect_boxes,
    lateral_band_filter,
    statistical_outlier_filter,
)
from .stereo_service import (
    compute_disparity,
    invalid_fraction,
    triangulate_color_cloud,
)


def merge_into_map(
    accumulated: ColoredPointCloud,
    incoming: ColoredPointCloud,
    merge_cell: float,
) -> ColoredPointCloud:
    """
    Merges a cloud already in map coordinates into the accumulated map.

    Points of both clouds inside the closed overlap box of their bounding
    boxes are averaged per `merge_cell` grid cell; points outside the box
    are kept verbatim. Output order: untouched map points, untouched
    incoming points, merged points.
    """
    if incoming.is_empty:
        return accumulated
    if accumulated.is_empty:
        return incoming

    overlap = intersect_boxes(
        bounding_box(accumulated), bounding_box(incoming)
    )
    if overlap is None:
        return concatenate([accumulated, incoming])

    in_map = overlap.contains(accumulated.positions)
    in_new = overlap.contains(incoming.positions)
    merged = box_grid_filter(
        concatenate([accumulated.subset(in_map), incoming.subset(in_new)]),
        merge_cell,
    )
    return concatenate(
        [accumulated.subset(~in_map), incoming.subset(~in_new), merged]
    )


def stitch_frames(
    frames: Sequence[tuple[ColoredPointCloud, FramePose]],
    merge_cell: float = 0.01,
) -> RowMap:
    """
    Stitches per-frame clouds into one row map.

    Every cloud is moved into the map frame with its pose, then folded into
    the accumulated map left to right with `merge_into_map`.

    Raises:
        EmptyInputError: If no frame is given.
        ParameterError: If `merge_cell` is not positive or frame indices
            do not increase.
    """
    if not frames:
        handle_error_helper(EmptyInputError, "No frames to stitch")
    if not merge_cell > 0:
        handle_error_helper(
            ParameterError, f"merge_cell must be positive, got {merge_cell}"
        )
    indices = [pose.frame_index for _, pose in frames]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        handle_error_helper(
            ParameterError, "Frame indices must be strictly increasing"
        )

    accumulated = ColoredPointCloud.empty(frame_id="map")
    total_in = 0
    for cloud, pose in frames:
        total_in += len(cloud)
        in_map = apply_transform(cloud, pose.pose, frame_id="map")
        accumulated = merge_into_map(accumulated, in_map, merge_cell)
        logger.debug(
            f"Frame {pose.frame_index}: +{len(cloud)} points, "
            f"map has {len(accumulated)}"
        )

    logger.info(
        f"Stitched {len(frames)} frames: {total_in} points in, "
        f"{len(accumulated)} in map"
    )
    return RowMap(
        cloud=accumulated, frame_count=len(frames), merge_cell=merge_cell
    )


def poses_by_index(poses: Sequence[FramePose]) -> dict[int, FramePose]:
    return {pose.frame_index: pose for pose in poses}


def pair_frames_with_poses(
    clouds: dict[int, ColoredPointCloud], poses: Sequence[FramePose]
) -> list[tuple[ColoredPointCloud, FramePose]]:
    """Orders clouds by frame index and attaches their pose.

    Raises:
        ParameterError: Naming every frame without a pose line.
    """
    lookup = poses_by_index(poses)
    missing = sorted(set(clouds) - set(lookup))
    if missing:
        handle_error_helper(
            ParameterError,
            "No pose for frame(s): " + ", ".join(str(i) for i in missing),
        )
    return [(clouds[i], lookup[i]) for i in sorted(clouds)]


def map_checksum(cloud: ColoredPointCloud) -> str:
    """Stable digest of a map's positions and colors."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(cloud.positions).tobytes())
    digest.update(np.ascontiguousarray(cloud.colors).tobytes())
    return digest.hexdigest()


def select_points(
    cloud: ColoredPointCloud,
    params: ReconstructionParams,
    stage: OutlierStage,
) -> ColoredPointCloud:
    """Outlier removal (when configured for `stage`) then the lateral
    band; the band only applies at frame stage, in the vehicle frame."""
    if params.outlier_stage is stage:
        cloud = statistical_outlier_filter(
            cloud, params.outlier_k, params.outlier_std_ratio
        )
    if stage is OutlierStage.FRAME:
        cloud = lateral_band_filter(
            cloud, params.lateral_min, params.lateral_max, params.lateral_axis
        )
    return cloud


def reconstruct_frame(
    frame_index: int,
    pair: RectifiedStereoPair,
    color_image: np.ndarray,
    calib: StereoCalibration,
    stereo_params: StereoParams | None = None,
    params: ReconstructionParams | None = None,
) -> FrameReconstruction:
    """
    One frame from images to a filtered colored cloud in the vehicle
    frame: disparity, triangulation, camera-to-vehicle transform, then
    point selection.
    """
    params = params or ReconstructionParams()
    disparity = compute_disparity(pair, stereo_params)
    in_camera = triangulate_color_cloud(disparity, pair, color_image, calib)
    in_vehicle = apply_transform(
        in_camera, calib.camera_to_vehicle, frame_id="vehicle"
    )
    cloud = select_points(in_vehicle, params, OutlierStage.FRAME)
    logger.info(
        f"Frame {frame_index}: {len(in_camera)} triangulated, "
        f"{len(cloud)} kept"
    )
    return FrameReconstruction(
        frame_index=frame_index,
        cloud=cloud,
        triangulated=len(in_camera),
        invalid_fraction=invalid_fraction(disparity),
    )
