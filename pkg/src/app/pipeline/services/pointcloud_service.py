from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ...settings.logging import logger
from ..schemas.geometry import (
    AxisAlignedBox,
    ColoredPointCloud,
    DescriptiveStats,
    RigidTransform,
)
from ..utils.error_handler import (
    EmptyInputError,
    InvalidTransformError,
    ParameterError,
    handle_error_helper,
)

AXES = {"x": 0, "y": 1, "z": 2}

Axis = Literal["x", "y", "z"] | int


def axis_index(axis: Axis) -> int:
    if isinstance(axis, str):
        if axis not in AXES:
            handle_error_helper(ParameterError, f"Unknown axis `{axis}`")
        return AXES[axis]
    if axis not in (0, 1, 2):
        handle_error_helper(ParameterError, f"Axis index {axis} not in 0..2")
    return int(axis)


def apply_transform(
    cloud: ColoredPointCloud, t: RigidTransform, frame_id: str | None = None
) -> ColoredPointCloud:
    """
    Maps every point p of the cloud to R @ p + translation.

    Args:
        cloud (ColoredPointCloud): The cloud to transform.
        t (RigidTransform): A proper rigid transform.
        frame_id (str | None): Label of the target frame; keeps the cloud's
            label when omitted.

    Returns:
        ColoredPointCloud: Transformed cloud, same order and colors.

    Raises:
        InvalidTransformError: If the rotation is not orthonormal with
            determinant +1.
    """
    if not t.is_orthonormal():
        handle_error_helper(
            InvalidTransformError,
            "Rotation is not orthonormal with determinant +1",
        )
    return cloud.with_positions(t.apply(cloud.positions), frame_id)


def voxel_indices(positions: np.ndarray, cell_size: float) -> np.ndarray:
    """Integer cell coordinates of an origin-anchored cubic grid."""
    return np.floor(positions / cell_size).astype(np.int64)


def box_grid_filter(
    cloud: ColoredPointCloud, cell_size: float
) -> ColoredPointCloud:
    """
    Replaces the points of every occupied cell by their mean position and
    mean color.

    Cells are axis-aligned cubes of side `cell_size` anchored at the
    origin; output points are ordered by cell index.

    Raises:
        ParameterError: If `cell_size` is not positive.
    """
    if not cell_size > 0:
        handle_error_helper(
            ParameterError, f"cell_size must be positive, got {cell_size}"
        )
    if cloud.is_empty:
        return cloud

    cells = voxel_indices(cloud.positions, cell_size)
    _, inverse, counts = np.unique(
        cells, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    n_cells = len(counts)

    positions = np.empty((n_cells, 3))
    colors = np.empty((n_cells, 3))
    for axis in range(3):
        positions[:, axis] = (
            np.bincount(inverse, cloud.positions[:, axis], n_cells) / counts
        )
        colors[:, axis] = (
            np.bincount(
                inverse, cloud.colors[:, axis].astype(np.float64), n_cells
            )
            / counts
        )

    logger.debug(
        f"Box grid filter ({cell_size} m): {len(cloud)} -> {n_cells} points"
    )
    return ColoredPointCloud(
        positions=positions,
        colors=np.clip(np.rint(colors), 0, 255).astype(np.uint8),
        frame_id=cloud.frame_id,
        colorless=cloud.colorless,
    )


def statistical_outlier_mask(
    cloud: ColoredPointCloud, k: int, std_ratio: float
) -> tuple[np.ndarray, bool]:
    """
    Computes the inlier mask of the statistical outlier filter.

    Returns:
        tuple[np.ndarray, bool]: The boolean keep-mask and a flag telling
            whether the cloud was too small and passed through untouched.
    """
    if k < 1 or not std_ratio > 0:
        handle_error_helper(
            ParameterError,
            f"Outlier filter needs k >= 1 and std_ratio > 0, "
            f"got k={k}, std_ratio={std_ratio}",
        )
    if len(cloud) <= k:
        logger.warning(
            f"Outlier filter skipped: {len(cloud)} points, k={k}; "
            "cloud passed through unchanged"
        )
        return np.ones(len(cloud), dtype=bool), True

    tree = cKDTree(cloud.positions)
    # the nearest hit of every query is the point itself
    distances, _ = tree.query(cloud.positions, k=k + 1)
    mean_distances = distances[:, 1:].mean(axis=1)
    threshold = mean_distances.mean() + std_ratio * mean_distances.std()
    return mean_distances <= threshold, False


def statistical_outlier_filter(
    cloud: ColoredPointCloud, k: int = 50, std_ratio: float = 1.0
) -> ColoredPointCloud:
    """
    Removes points whose mean distance to their k nearest neighbors exceeds
    the global mean of those distances plus `std_ratio` standard
    deviations. Clouds with at most k points pass through with a warning.
    """
    mask, passed_through = statistical_outlier_mask(cloud, k, std_ratio)
    if passed_through:
        return cloud
    filtered = cloud.subset(mask)
    logger.debug(
        f"Outlier filter (k={k}, ratio={std_ratio}): "
        f"{len(cloud)} -> {len(filtered)} points"
    )
    return filtered


def lateral_band_filter(
    cloud: ColoredPointCloud,
    min_offset: float,
    max_offset: float,
    axis: Axis = "x",
) -> ColoredPointCloud:
    """Keeps points whose lateral coordinate lies in the closed interval
    [min_offset, max_offset]."""
    if not min_offset < max_offset:
        handle_error_helper(
            ParameterError,
            f"Lateral band [{min_offset}, {max_offset}] is inverted or empty",
        )
    lateral = cloud.positions[:, axis_index(axis)]
    return cloud.subset((lateral >= min_offset) & (lateral <= max_offset))


def descriptive_stats(values: Iterable[float]) -> DescriptiveStats:
    """
    Sample mean, standard deviation (n - 1 denominator), min and max.
    A single value has standard deviation 0.

    Raises:
        EmptyInputError: If `values` is empty.
        ParameterError: If a value is not finite.
    """
    data = np.asarray(list(values), dtype=np.float64)
    if data.size == 0:
        handle_error_helper(EmptyInputError, "No values to summarize")
    if not np.all(np.isfinite(data)):
        handle_error_helper(ParameterError, "Values must be finite")
    std = float(data.std(ddof=1)) if data.size > 1 else 0.0
    low, high = float(data.min()), float(data.max())
    mean = min(max(float(data.mean()), low), high)
    return DescriptiveStats(
        mean=mean, std_dev=std, min=low, max=high, count=int(data.size)
    )


def bounding_box(cloud: ColoredPointCloud) -> AxisAlignedBox:
    if cloud.is_empty:
        handle_error_helper(EmptyInputError, "Empty cloud has no bounding box")
    return AxisAlignedBox.from_arrays(
        cloud.positions.min(axis=0), cloud.positions.max(axis=0)
    )


def intersect_boxes(
    a: AxisAlignedBox, b: AxisAlignedBox
) -> AxisAlignedBox | None:
    """Closed intersection of two boxes, or None when they are disjoint."""
    low = np.maximum(a.min_corner.as_array(), b.min_corner.as_array())
    high = np.minimum(a.max_corner.as_array(), b.max_corner.as_array())
    if np.any(low > high):
        return None
    return AxisAlignedBox.from_arrays(low, high)


def crop_box(
    cloud: ColoredPointCloud, box: AxisAlignedBox
) -> ColoredPointCloud:
    return cloud.subset(box.contains(cloud.positions))


def concatenate(
    clouds: Sequence[ColoredPointCloud], frame_id: str | None = None
) -> ColoredPointCloud:
    if not clouds:
        handle_error_helper(EmptyInputError, "Nothing to concatenate")
    return ColoredPointCloud(
        positions=np.concatenate([c.positions for c in clouds]),
        colors=np.concatenate([c.colors for c in clouds]),
        frame_id=frame_id or clouds[0].frame_id,
        colorless=all(c.colorless for c in clouds),
    )
