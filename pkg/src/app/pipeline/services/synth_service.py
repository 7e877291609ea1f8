"""Synthetic vineyards with exact ground truth.

All randomness comes from numpy's counter-based Philox bit generator keyed
by the caller's seed, so fixtures are identical across platforms.
"""

import math
from typing import Sequence

import numpy as np
from scipy import ndimage

from ...settings.logging import logger
from ..schemas.detection import ClassLabel
from ..schemas.geometry import ColoredPointCloud
from ..schemas.mapping import FramePose
from ..schemas.stereo import RectifiedStereoPair, StereoCalibration
from ..schemas.synth import (
    AnnotatedImage,
    AnnotatedSceneSpec,
    CameraRig,
    GroundTruthBundle,
    SceneLabel,
    StereoTruth,
    SyntheticFrame,
    SyntheticRowSpec,
)
from ..utils.error_handler import ParameterError, handle_error_helper

CANOPY_COLOR = ((40, 80), (120, 160), (30, 70))
TRUNK_COLOR = ((105, 135), (65, 95), (35, 65))
GROUND_COLOR = ((115, 145), (85, 115), (55, 85))
WALL_COLOR = (150, 140, 170)

SCENE_COLORS = {
    ClassLabel.BACKGROUND: (140, 150, 175),
    ClassLabel.LEAVES: (60, 140, 50),
    ClassLabel.WOOD: (130, 85, 50),
    ClassLabel.POLE: (220, 220, 215),
    ClassLabel.BUNCH: (60, 35, 105),
}
MAX_HOLE = 3


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _colors(rng: np.random.Generator, n: int, ranges) -> np.ndarray:
    return np.column_stack(
        [
            rng.integers(low, high, size=n, endpoint=True)
            for low, high in ranges
        ]
    ).astype(np.uint8)


def _ellipsoid(rng, n: int, center, semi_axes) -> np.ndarray:
    directions = rng.normal(size=(n, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / 3.0)
    return center + directions * radii[:, None] * np.asarray(semi_axes)


def _cylinder(rng, n: int, base, radius: float, height: float) -> np.ndarray:
    angle = rng.random(n) * 2.0 * math.pi
    r = radius * np.sqrt(rng.random(n))
    return np.asarray(base) + np.column_stack(
        [r * np.cos(angle), r * np.sin(angle), rng.random(n) * height]
    )


def generate_row(spec: SyntheticRowSpec) -> GroundTruthBundle:
    """
    Samples a row of ellipsoidal green canopies on brown trunks over a
    brown ground strip. Canopy colors are green-dominant, every other
    point red-dominant or neutral.
    """
    rng = make_rng(spec.seed)
    a, b, c = spec.semi_axes
    per_plant = max(1, round(spec.density * spec.plant_volume))
    positions, colors, labels, assignments = [], [], [], []

    for plant in range(spec.plant_count):
        center = spec.canopy_center(plant)
        canopy = _ellipsoid(rng, per_plant, center, spec.semi_axes)
        if spec.noise_sigma > 0:
            canopy += rng.normal(scale=spec.noise_sigma, size=canopy.shape)
        positions.append(canopy)
        colors.append(_colors(rng, per_plant, CANOPY_COLOR))
        labels.append(np.full(per_plant, SceneLabel.CANOPY))
        assignments.append(np.full(per_plant, plant))

        trunk_top = center[2] - c
        trunk_count = max(
            1, round(spec.density * math.pi * spec.trunk_radius**2 * trunk_top)
        )
        base = [center[0], center[1], 0.0]
        positions.append(
            _cylinder(rng, trunk_count, base, spec.trunk_radius, trunk_top)
        )
        colors.append(_colors(rng, trunk_count, TRUNK_COLOR))
        labels.append(np.full(trunk_count, SceneLabel.TRUNK))
        assignments.append(np.full(trunk_count, -1))

    y_low = -spec.spacing / 2.0
    area = spec.ground_width * spec.row_length
    ground_count = round(spec.ground_density * area)
    if ground_count:
        ground = np.column_stack(
            [
                spec.row_x
                + (rng.random(ground_count) - 0.5) * spec.ground_width,
                y_low + rng.random(ground_count) * spec.row_length,
                np.zeros(ground_count),
            ]
        )
        positions.append(ground)
        colors.append(_colors(rng, ground_count, GROUND_COLOR))
        labels.append(np.full(ground_count, SceneLabel.GROUND))
        assignments.append(np.full(ground_count, -1))

    cloud = ColoredPointCloud(
        positions=np.concatenate(positions),
        colors=np.concatenate(colors),
        frame_id="map",
    )
    logger.info(
        f"Generated row: {spec.plant_count} plants, {len(cloud)} points"
    )
    return GroundTruthBundle(
        cloud=cloud,
        labels=np.concatenate(labels).astype(np.uint8),
        assignments=np.concatenate(assignments).astype(np.int64),
        plant_centers=np.array(
            [spec.canopy_center(i) for i in range(spec.plant_count)]
        ),
        plant_volumes=[spec.plant_volume] * spec.plant_count,
        plant_heights=[2.0 * c] * spec.plant_count,
    )


def make_texture(
    shape: tuple[int, int], seed: int, blur: float = 0.7
) -> np.ndarray:
    """Random 8-bit texture, lightly blurred so it survives resampling."""
    noise = make_rng(seed).random(shape)
    if blur > 0:
        noise = ndimage.gaussian_filter(noise, blur)
    low, high = noise.min(), noise.max()
    scaled = (noise - low) / (high - low) if high > low else noise
    return np.rint(scaled * 255.0).astype(np.uint8)


def _occlusion(xr: np.ndarray) -> np.ndarray:
    """Left pixels landing behind a pixel further right in the right view."""
    reversed_min = np.minimum.accumulate(xr[:, ::-1], axis=1)[:, ::-1]
    following = np.full_like(xr, np.inf)
    following[:, :-1] = reversed_min[:, 1:]
    return following < xr + 0.5


def generate_stereo_pair(
    texture: np.ndarray,
    disparity_truth: np.ndarray | float,
    seed: int = 0,
) -> tuple[RectifiedStereoPair, StereoTruth]:
    """
    Renders the right view of a left texture: every left pixel moves
    `d` pixels to the left, spans between neighboring pixels are filled
    by linear interpolation and the nearer surface wins where spans
    overlap. Right pixels seen by no left pixel get fresh texture.
    """
    left = np.asarray(texture, dtype=np.float64)
    if left.ndim != 2:
        handle_error_helper(ParameterError, "Texture must be grayscale")
    height, width = left.shape
    d = np.broadcast_to(
        np.asarray(disparity_truth, dtype=np.float64), left.shape
    ).copy()
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        handle_error_helper(
            ParameterError, "Disparities must be finite and non-negative"
        )

    xr = np.arange(width)[None, :] - d
    a, b = xr[:, :-1], xr[:, 1:]
    start, stop = np.ceil(a), np.floor(b)
    counts = np.where(b >= a, np.maximum(stop - start + 1, 0), 0).astype(
        np.int64
    )
    rows = np.repeat(np.arange(height)[:, None], width - 1, axis=1)
    seg = np.repeat(np.arange(counts.size), counts.ravel())
    within = np.arange(len(seg)) - np.repeat(
        np.cumsum(counts.ravel()) - counts.ravel(), counts.ravel()
    )
    k = start.ravel()[seg] + within
    span = (b - a).ravel()[seg]
    t = np.divide(
        k - a.ravel()[seg], span, out=np.zeros_like(span), where=span > 0
    )
    cols = np.arange(width - 1)
    left_cols = np.broadcast_to(cols, (height, width - 1)).ravel()[seg]
    row = rows.ravel()[seg]
    value = (1 - t) * left[row, left_cols] + t * left[row, left_cols + 1]
    depth = (1 - t) * d[row, left_cols] + t * d[row, left_cols + 1]

    inside = (k >= 0) & (k < width)
    pixel = (row * width + k.astype(np.int64))[inside]
    value, depth = value[inside], depth[inside]
    order = np.lexsort((-depth, pixel))
    first = np.unique(pixel[order], return_index=True)[1]
    chosen = order[first]

    right = make_texture((height, width), seed + 1).astype(np.float64)
    right.ravel()[pixel[chosen]] = value[chosen]
    pair = RectifiedStereoPair(
        left=np.rint(left).astype(np.uint8),
        right=np.rint(np.clip(right, 0, 255)).astype(np.uint8),
    )
    truth = StereoTruth(
        disparity=d, occluded=_occlusion(xr), out_of_view=xr < 0
    )
    return pair, truth


def _fill_holes(filled: np.ndarray, *layers: np.ndarray):
    """Copies every layer from the nearest filled pixel; returns the
    distance to it."""
    if not filled.any():
        return np.full(filled.shape, np.inf), layers
    distance, (iy, ix) = ndimage.distance_transform_edt(
        ~filled, return_indices=True
    )
    return distance, tuple(layer[iy, ix] for layer in layers)


def render_frame(
    bundle: GroundTruthBundle,
    calib: StereoCalibration,
    pose: FramePose,
    rig: CameraRig,
    shades: np.ndarray,
    seed: int = 0,
) -> SyntheticFrame:
    """
    Projects the row into one camera frame with a z-buffer (each point
    splatted onto a 3x3 block), fills small holes from the nearest pixel
    and puts a far textured wall behind everything else.
    """
    width, height = rig.width, rig.height
    to_camera = pose.pose.compose(calib.camera_to_vehicle).inverse()
    points = to_camera.apply(bundle.cloud.positions)
    f, baseline = calib.focal_length, calib.baseline
    d_min, d_max = rig.disparity_range.d_min, rig.disparity_range.d_max
    z = points[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.rint(f * points[:, 0] / z + calib.cx)
        v = np.rint(f * points[:, 1] / z + calib.cy)
    visible = (
        (z > 0.05)
        & (u >= -1)
        & (u <= width)
        & (v >= -1)
        & (v <= height)
    )
    z = z[visible]
    u = u[visible].astype(np.int64)
    v = v[visible].astype(np.int64)
    colors = bundle.cloud.colors[visible]
    point_shades = shades[visible]
    d = f * baseline / z

    offsets = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)])
    su = (u[:, None] + offsets[None, :, 1]).ravel()
    sv = (v[:, None] + offsets[None, :, 0]).ravel()
    source = np.repeat(np.arange(len(z)), len(offsets))
    sd = d[source]
    on_image = (su >= 0) & (su < width) & (sv >= 0) & (sv < height)
    keep = on_image & (sd >= d_min) & (sd <= d_max - 1)
    su, sv, sd, source = su[keep], sv[keep], sd[keep], source[keep]
    pixel = sv * width + su
    order = np.lexsort((-sd, pixel))
    first = np.unique(pixel[order], return_index=True)[1]
    chosen = order[first]

    disparity = np.zeros((height, width))
    color = np.zeros((height, width, 3), dtype=np.uint8)
    shade = np.zeros((height, width))
    filled = np.zeros((height, width), dtype=bool)
    flat = pixel[chosen]
    disparity.ravel()[flat] = sd[chosen]
    color.reshape(-1, 3)[flat] = colors[source[chosen]]
    shade.ravel()[flat] = point_shades[source[chosen]]
    filled.ravel()[flat] = True

    distance, (disparity, color, shade) = _fill_holes(
        filled, disparity, color, shade
    )
    wall = distance > MAX_HOLE
    luminance = color.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    gray = np.clip(luminance * (0.4 + 1.2 * shade), 0, 255)
    wall_texture = make_texture((height, width), seed + pose.frame_index)
    gray[wall] = wall_texture[wall]
    disparity[wall] = float(d_min)
    color[wall] = WALL_COLOR

    pair, truth = generate_stereo_pair(
        gray, disparity, seed=seed + 7919 * (pose.frame_index + 1)
    )
    return SyntheticFrame(
        frame_index=pose.frame_index, pair=pair, color=color, truth=truth
    )


def render_stereo_frames(
    bundle: GroundTruthBundle,
    rig: CameraRig,
    poses: Sequence[FramePose] | None = None,
    spec: SyntheticRowSpec | None = None,
    seed: int = 0,
) -> list[SyntheticFrame]:
    """Renders left/right/color images for every vehicle pose."""
    if poses is None:
        if spec is None:
            handle_error_helper(
                ParameterError, "Either poses or a row spec is required"
            )
        poses = rig.poses(spec)  # type: ignore[arg-type]
    calib = rig.calibration()
    shades = make_rng(seed).random(len(bundle.cloud))
    frames = [
        render_frame(bundle, calib, pose, rig, shades, seed) for pose in poses
    ]
    logger.info(f"Rendered {len(frames)} stereo frames")
    return frames


def _ellipse_mask(shape, center, semi_x: int, semi_y: int) -> np.ndarray:
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    cx, cy = center
    return ((xx - cx) / semi_x) ** 2 + ((yy - cy) / semi_y) ** 2 <= 1.0


def generate_annotated_image(spec: AnnotatedSceneSpec) -> AnnotatedImage:
    """
    Paints a leaf field with background blocks, brown wood strips along
    the cell rows, a bright pole along a cell column and dark blue-violet
    bunch ellipses on top, with the exact label map and one pixel region
    per bunch (overlapping bunches keep separate regions).
    """
    rng = make_rng(spec.seed)
    explicit = spec.bunch_centers is not None
    count = len(spec.bunch_centers) if explicit else spec.bunch_count
    columns = max(1, min(spec.columns, count)) if count else 2
    rows = max(1, math.ceil(count / columns)) if count else 1
    width, height = columns * spec.cell, rows * spec.cell
    shape = (height, width)

    labels = np.full(shape, ClassLabel.LEAVES, dtype=np.uint8)
    for _ in range(spec.background_blocks):
        bw, bh = int(rng.integers(30, 61)), int(rng.integers(20, 41))
        x0 = int(rng.integers(0, width - bw + 1))
        y0 = int(rng.integers(0, height - bh + 1))
        labels[y0 : y0 + bh, x0 : x0 + bw] = ClassLabel.BACKGROUND
    if spec.wood_strips:
        for y in range(spec.cell, height, spec.cell):
            labels[max(0, y - 5) : y + 5, :] = ClassLabel.WOOD
    if spec.pole and columns > 1:
        x = spec.cell * (columns // 2)
        labels[:, x - 8 : x + 8] = ClassLabel.POLE

    regions = []
    for i in range(count):
        semi_x = int(rng.integers(*spec.semi_axes_x, endpoint=True))
        semi_y = int(rng.integers(*spec.semi_axes_y, endpoint=True))
        if explicit:
            center = spec.bunch_centers[i]  # type: ignore[index]
        else:
            row, col = divmod(i, columns)
            jitter = rng.integers(-spec.jitter, spec.jitter, 2, endpoint=True)
            center = (
                col * spec.cell + spec.cell // 2 + int(jitter[0]),
                row * spec.cell + spec.cell // 2 + int(jitter[1]),
            )
        mask = _ellipse_mask(shape, center, semi_x, semi_y)
        labels[mask] = ClassLabel.BUNCH
        ys, xs = np.nonzero(mask)
        regions.append(np.column_stack([xs, ys]))

    palette = np.array([SCENE_COLORS[ClassLabel(i)] for i in range(5)])
    noise = rng.integers(-spec.noise, spec.noise, (*shape, 3), endpoint=True)
    image = np.clip(palette[labels] + noise, 0, 255).astype(np.uint8)
    logger.debug(f"Annotated image {width}x{height} with {count} bunches")
    return AnnotatedImage(image=image, labels=labels, regions=regions)
