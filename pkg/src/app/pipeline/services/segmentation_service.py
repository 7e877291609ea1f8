import numpy as np
from scipy.cluster.vq import vq

from ...settings.logging import logger
from ..schemas.geometry import ColoredPointCloud, Point3D
from ..schemas.segmentation import (
    CanopyLabeling,
    GrviValue,
    HeightComparison,
    KMeansResult,
    PlantCluster,
    SegmentationParams,
    SegmentationResult,
)
from ..utils.error_handler import (
    InsufficientPointsError,
    ParameterError,
    handle_error_helper,
)
from .pointcloud_service import voxel_indices

MAX_KMEANS_ITERATIONS = 100


def grvi(r: float, g: float) -> GrviValue:
    """
    Green-Red Vegetation Index (g - r) / (g + r); 0 when g + r = 0.

    Raises:
        ParameterError: If a channel is negative.
    """
    if r < 0 or g < 0:
        handle_error_helper(
            ParameterError, f"Channels must be non-negative, got r={r}, g={g}"
        )
    total = g + r
    if total == 0:
        return 0.0
    return (g - r) / total


def grvi_array(colors: np.ndarray) -> np.ndarray:
    """Per-row GRVI of an (N, 3) RGB array."""
    red = colors[:, 0].astype(np.float64)
    green = colors[:, 1].astype(np.float64)
    total = green + red
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, (green - red) / total, 0.0)


def grvi_cloud(cloud: ColoredPointCloud) -> np.ndarray:
    return grvi_array(cloud.colors)


def label_canopy(
    cloud: ColoredPointCloud,
    ground_height: float = 0.0,
    params: SegmentationParams | None = None,
) -> CanopyLabeling:
    """
    Labels canopy points cell by cell.

    The cloud is split into origin-anchored cubes of side `cell_side`. A
    cell, with all its points, is canopy iff the fraction p of its points
    with positive GRVI exceeds `th_p` and the mean height above
    `ground_height` is below (or above, per `height_comparison`) `th_h`.
    """
    params = params or SegmentationParams()
    if cloud.is_empty:
        return CanopyLabeling(flags=np.zeros(0, dtype=bool))

    cells = voxel_indices(cloud.positions, params.cell_side)
    _, inverse, counts = np.unique(
        cells, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    n_cells = len(counts)

    green = (grvi_cloud(cloud) > 0).astype(np.float64)
    fraction = np.bincount(inverse, green, n_cells) / counts
    heights = cloud.positions[:, 2] - ground_height
    mean_height = np.bincount(inverse, heights, n_cells) / counts

    if params.height_comparison is HeightComparison.BELOW:
        height_ok = mean_height < params.th_h
    else:
        height_ok = mean_height > params.th_h
    canopy_cells = (fraction > params.th_p) & height_ok

    flags = canopy_cells[inverse]
    logger.info(
        f"Canopy labeling: {int(canopy_cells.sum())}/{n_cells} cells, "
        f"{int(flags.sum())}/{len(flags)} points"
    )
    return CanopyLabeling(flags=flags)


def initial_centroids(
    points: np.ndarray,
    k: int,
    row_axis: np.ndarray,
    spacing: float,
    centre_comb: bool = False,
) -> np.ndarray:
    """
    Centroids spaced by `spacing` along the row axis at the canopy's mean
    height and depth. The comb starts at the first point along the row;
    with `centre_comb` it is centred on the row extent instead whenever
    the canopy is longer than the comb.
    """
    projections = points @ row_axis
    start = projections.min()
    extent = projections.max() - start
    comb = (k - 1) * spacing
    if centre_comb and extent > comb:
        start += (extent - comb) / 2.0
    mean = points.mean(axis=0)
    offsets = start + spacing * np.arange(k) - mean @ row_axis
    return mean[None, :] + offsets[:, None] * row_axis[None, :]


def _within_ss(points, centroids, assignments) -> float:
    return float(((points - centroids[assignments]) ** 2).sum())


def _update(points, assignments, distances, k, previous):
    centroids = np.empty_like(previous)
    counts = np.bincount(assignments, minlength=k)
    for axis in range(3):
        sums = np.bincount(assignments, points[:, axis], minlength=k)
        with np.errstate(divide="ignore", invalid="ignore"):
            centroids[:, axis] = sums / counts
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # farthest points from their centroid re-seed empty clusters
        order = np.argsort(-distances, kind="stable")
        for cluster, point in zip(empty, order):
            centroids[cluster] = points[point]
        logger.warning(f"k-means re-seeded {empty.size} empty cluster(s)")
    return centroids


def run_kmeans(
    points: np.ndarray,
    k: int,
    row_axis=(0.0, 1.0, 0.0),
    spacing: float = 0.9,
    max_iterations: int = MAX_KMEANS_ITERATIONS,
    centre_comb: bool = False,
) -> KMeansResult:
    """
    Lloyd iterations with row-aware initialization; stops at an assignment
    fixpoint or after `max_iterations`.

    Raises:
        ParameterError: If k < 1, the row axis is null or spacing is not
            positive.
        InsufficientPointsError: If there are fewer points than clusters.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    axis = np.asarray(row_axis, dtype=np.float64)
    if k < 1 or not spacing > 0 or not np.linalg.norm(axis) > 0:
        handle_error_helper(
            ParameterError,
            f"k-means needs k >= 1, spacing > 0 and a non-null row axis "
            f"(k={k}, spacing={spacing})",
        )
    if len(points) < k:
        handle_error_helper(
            InsufficientPointsError,
            f"{len(points)} canopy points cannot form {k} clusters",
        )
    axis = axis / np.linalg.norm(axis)

    centroids = initial_centroids(points, k, axis, spacing, centre_comb)
    assignments, distances = vq(points, centroids)
    history = [_within_ss(points, centroids, assignments)]
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        centroids = _update(points, assignments, distances, k, centroids)
        new_assignments, distances = vq(points, centroids)
        history.append(_within_ss(points, centroids, new_assignments))
        if np.array_equal(new_assignments, assignments):
            converged = True
            break
        assignments = new_assignments
    else:
        assignments = new_assignments
        logger.warning(
            f"k-means stopped after {max_iterations} iterations "
            "without reaching a fixpoint"
        )

    return KMeansResult(
        centroids=centroids,
        assignments=assignments.astype(np.int64),
        inertia_history=history,
        iterations=iterations,
        converged=converged,
    )


def kmeans_plants(
    canopy_points: np.ndarray,
    k: int,
    row_axis=(0.0, 1.0, 0.0),
    spacing: float = 0.9,
    point_indices: np.ndarray | None = None,
    max_iterations: int = MAX_KMEANS_ITERATIONS,
    centre_comb: bool = False,
) -> list[PlantCluster]:
    """
    Partitions canopy points into k plants.

    `point_indices` maps rows of `canopy_points` back to indices of the
    labeled cloud; cluster members are reported in those indices.
    """
    result = run_kmeans(
        canopy_points, k, row_axis, spacing, max_iterations, centre_comb
    )
    points = np.asarray(canopy_points, dtype=np.float64).reshape(-1, 3)
    if point_indices is None:
        point_indices = np.arange(len(points))

    clusters = []
    for cluster_id in range(k):
        members = np.flatnonzero(result.assignments == cluster_id)
        centroid = (
            points[members].mean(axis=0)
            if members.size
            else result.centroids[cluster_id]
        )
        clusters.append(
            PlantCluster(
                cluster_id=cluster_id,
                indices=point_indices[members],
                centroid=Point3D.from_array(centroid),
            )
        )
    logger.info(
        f"k-means: {k} plants from {len(points)} points in "
        f"{result.iterations} iterations"
    )
    return clusters


def segment_row(
    cloud: ColoredPointCloud,
    k: int,
    params: SegmentationParams | None = None,
    ground_height: float = 0.0,
    row_axis=(0.0, 1.0, 0.0),
    spacing: float = 0.9,
    max_iterations: int = MAX_KMEANS_ITERATIONS,
    centre_comb: bool = False,
) -> SegmentationResult:
    """Canopy labeling followed by per-plant clustering."""
    labeling = label_canopy(cloud, ground_height, params)
    indices = labeling.canopy_indices
    clusters = kmeans_plants(
        cloud.positions[indices],
        k,
        row_axis,
        spacing,
        point_indices=indices,
        max_iterations=max_iterations,
        centre_comb=centre_comb,
    )
    return SegmentationResult(
        labeling=labeling, clusters=clusters, grvi=grvi_cloud(cloud)
    )
