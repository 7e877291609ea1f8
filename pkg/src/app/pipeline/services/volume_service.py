from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ...settings.logging import logger
from ..schemas.geometry import AxisAlignedBox, Point3D
from ..schemas.volume import (
    ManualMeasurement,
    OrientedBox,
    PlantReport,
    VolumeEstimate,
    VolumeMethod,
    VolumeSummary,
    og_key,
)
from ..utils.error_handler import (
    DegenerateGeometryError,
    EmptyInputError,
    ParameterError,
    handle_error_helper,
)
from .pointcloud_service import descriptive_stats, voxel_indices

DEFAULT_DELTAS = (0.05, 0.1)


def _as_points(points) -> np.ndarray:
    array = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(array) == 0:
        handle_error_helper(EmptyInputError, "Empty point set")
    return array


def occupancy_grid_volume(points, delta: float) -> VolumeEstimate:
    """Number of distinct occupied origin-anchored voxels times delta^3."""
    if not delta > 0:
        handle_error_helper(
            ParameterError, f"Voxel size must be positive, got {delta}"
        )
    array = _as_points(points)
    occupied = len(np.unique(voxel_indices(array, delta), axis=0))
    return VolumeEstimate(
        method=VolumeMethod.OG,
        value=occupied * delta**3,
        params={"delta": delta},
    )


def _is_flat(array: np.ndarray) -> bool:
    centered = array - array.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    scale = max(float(singular[0]), 1e-300)
    return len(singular) < 3 or singular[2] <= 1e-10 * scale


def convex_hull_volume(points) -> VolumeEstimate:
    """
    Volume of the 3-D convex hull, summed as a fan of tetrahedra from the
    mean of the hull vertices over every hull facet.

    Raises:
        DegenerateGeometryError: For fewer than 4 points or coplanar sets;
            the error carries `value = 0.0`.
    """
    array = _as_points(points)
    if len(array) < 4 or _is_flat(array):
        raise DegenerateGeometryError(
            f"Convex hull of {len(array)} points is flat or undefined"
        )
    try:
        hull = ConvexHull(array)
    except QhullError as e:
        raise DegenerateGeometryError(f"Qhull failed: {e}") from e

    apex = array[hull.vertices].mean(axis=0)
    a, b, c = (array[hull.simplices[:, i]] - apex for i in range(3))
    volume = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c))).sum() / 6.0
    return VolumeEstimate(method=VolumeMethod.CH, value=float(volume))


def _box_for(array: np.ndarray, axes: np.ndarray):
    projected = array @ axes.T
    low, high = projected.min(axis=0), projected.max(axis=0)
    return low, high, float(np.prod(high - low))


def obb_volume(points) -> tuple[VolumeEstimate, OrientedBox]:
    """
    Approximate minimal oriented box: the smaller of the box along the
    principal axes of the point covariance and the axis-aligned box, so
    the result never exceeds the AABB volume.
    """
    array = _as_points(points)
    centered = array - array.mean(axis=0)
    covariance = centered.T @ centered / len(array)
    _, vectors = np.linalg.eigh(covariance)
    principal = vectors.T[::-1].copy()
    if np.linalg.det(principal) < 0:
        principal[2] *= -1

    best = None
    for axes in (principal, np.eye(3)):
        low, high, volume = _box_for(array, axes)
        if best is None or volume < best[3]:
            best = (axes, low, high, volume)
    axes, low, high, volume = best  # type: ignore[misc]

    box = OrientedBox(
        center=Point3D.from_array(axes.T @ ((low + high) / 2.0)),
        axes=axes,
        half_extents=(high - low) / 2.0,
    )
    return VolumeEstimate(method=VolumeMethod.OBB, value=volume), box


def aabb_volume(points) -> tuple[VolumeEstimate, AxisAlignedBox]:
    array = _as_points(points)
    box = AxisAlignedBox.from_arrays(array.min(axis=0), array.max(axis=0))
    return VolumeEstimate(method=VolumeMethod.AABB, value=box.volume), box


def manual_reference_volume(
    depth: float, height: float, width: float = 0.9
) -> VolumeEstimate:
    """Width x depth x height, width defaulting to the plant spacing."""
    if not (depth > 0 and height > 0 and width > 0):
        handle_error_helper(
            ParameterError,
            f"Manual dimensions must be positive, got depth={depth}, "
            f"height={height}, width={width}",
        )
    return VolumeEstimate(
        method=VolumeMethod.MANUAL,
        value=width * depth * height,
        params={"width": width, "depth": depth, "height": height},
    )


def canopy_height(points) -> float:
    """Vertical extent (z) of a plant's points."""
    array = _as_points(points)
    return float(array[:, 2].max() - array[:, 2].min())


def estimate_plant(
    points, plant_id: int, deltas: Sequence[float] = DEFAULT_DELTAS
) -> PlantReport:
    """All volume estimators plus canopy height for one plant. Flat or
    tiny clusters get a hull volume of 0 and the degenerate flag."""
    array = _as_points(points)
    degenerate = False
    try:
        ch = convex_hull_volume(array).value
    except DegenerateGeometryError as e:
        logger.warning(f"Plant {plant_id}: {e.message}; hull volume 0")
        ch, degenerate = DegenerateGeometryError.value, True
    return PlantReport(
        plant_id=plant_id,
        n_points=len(array),
        og={
            og_key(delta): occupancy_grid_volume(array, delta).value
            for delta in deltas
        },
        ch=ch,
        obb=obb_volume(array)[0].value,
        aabb=aabb_volume(array)[0].value,
        height=canopy_height(array),
        degenerate=degenerate,
    )


def compare_to_manual(
    reports: Sequence[PlantReport], manual: Sequence[ManualMeasurement]
) -> dict[str, float]:
    """Relative difference of each method's mean volume against the mean
    manual volume over the plants measured by hand."""
    lookup = {m.plant_id: m for m in manual}
    matched = [r for r in reports if r.plant_id in lookup]
    if not matched:
        return {}
    manual_mean = float(
        np.mean(
            [
                manual_reference_volume(
                    lookup[r.plant_id].depth,
                    lookup[r.plant_id].height,
                    lookup[r.plant_id].width,
                ).value
                for r in matched
            ]
        )
    )
    keys = [k for k in matched[0].values() if k != "height"]
    return {
        key: (float(np.mean([r.values()[key] for r in matched])) - manual_mean)
        / manual_mean
        for key in keys
    }


def summarize(
    reports: Sequence[PlantReport],
    manual: Sequence[ManualMeasurement] | None = None,
) -> VolumeSummary:
    """Descriptive statistics per method and for canopy height."""
    if not reports:
        handle_error_helper(EmptyInputError, "No plant reports to summarize")
    keys = [k for k in reports[0].values() if k != "height"]
    methods = {
        key: descriptive_stats(r.values()[key] for r in reports)
        for key in keys
    }
    manual_stats = None
    discrepancy: dict[str, float] = {}
    if manual:
        manual_stats = descriptive_stats(
            manual_reference_volume(m.depth, m.height, m.width).value
            for m in manual
        )
        discrepancy = compare_to_manual(reports, manual)
    return VolumeSummary(
        plant_count=len(reports),
        methods=methods,
        height=descriptive_stats(r.height for r in reports),
        manual=manual_stats,
        discrepancy_vs_manual=discrepancy,
        degenerate_plants=[r.plant_id for r in reports if r.degenerate],
    )
