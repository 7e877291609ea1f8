import math

import numpy as np

from ...settings.logging import logger
from ..schemas.geometry import ColoredPointCloud
from ..schemas.stereo import (
    INVALID,
    CensusImage,
    CostVolume,
    DisparityMap,
    DisparityRange,
    RectifiedStereoPair,
    StereoCalibration,
    StereoParams,
)
from ..utils.error_handler import (
    ConfigurationError,
    InvalidDisparityError,
    ParameterError,
    handle_error_helper,
)

MAX_CENSUS_WINDOW = 7

# (dx, dy) steps of the eight aggregation paths
PATH_DIRECTIONS = (
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
)


def census_transform(image: np.ndarray, window: int = 5) -> CensusImage:
    """
    Census descriptors over a square window.

    Bit i of a descriptor is 1 iff the i-th neighbor (raster order, center
    skipped) is strictly darker than the center; the first neighbor is the
    most significant bit. Pixels closer than window // 2 to the border are
    marked invalid.

    Raises:
        ParameterError: For even, too small or too large windows, or an
            image not larger than the window.
    """
    if window % 2 == 0 or not 3 <= window <= MAX_CENSUS_WINDOW:
        handle_error_helper(
            ParameterError,
            f"Census window must be odd within 3..{MAX_CENSUS_WINDOW}, "
            f"got {window}",
        )
    image = np.asarray(image)
    height, width = image.shape[:2]
    if height <= window or width <= window:
        handle_error_helper(
            ParameterError,
            f"Image {width}x{height} is not larger than the "
            f"{window}x{window} census window",
        )

    r = window // 2
    pixels = image.astype(np.int16)
    center = pixels[r : height - r, r : width - r]
    words = np.zeros(center.shape, dtype=np.uint64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            neighbor = pixels[
                r + dy : height - r + dy, r + dx : width - r + dx
            ]
            words = (words << np.uint64(1)) | (neighbor < center).astype(
                np.uint64
            )

    descriptors = np.zeros((height, width), dtype=np.uint64)
    descriptors[r : height - r, r : width - r] = words
    valid = np.zeros((height, width), dtype=bool)
    valid[r : height - r, r : width - r] = True
    return CensusImage(
        descriptors=descriptors,
        valid=valid,
        window=window,
        n_bits=window * window - 1,
    )


def hamming_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.bitwise_xor(a, b))


def build_cost_volume(
    pair: RectifiedStereoPair,
    disparity_range: DisparityRange,
    window: int = 5,
) -> CostVolume:
    """
    Census/Hamming matching costs for every pixel and disparity.

    cost(x, y, d) compares the left descriptor at (x, y) with the right one
    at (x - d, y); undefined descriptors and out-of-bounds matches get the
    maximal cost (the descriptor length).
    """
    left = census_transform(pair.left, window)
    right = census_transform(pair.right, window)
    height, width = pair.shape
    n_bits = left.n_bits

    costs = np.full(
        (height, width, disparity_range.count), n_bits, dtype=np.uint8
    )
    for k, d in enumerate(disparity_range.values):
        d = int(d)
        if d >= width:
            continue
        defined = left.valid[:, d:] & right.valid[:, : width - d]
        distance = hamming_distance(
            left.descriptors[:, d:], right.descriptors[:, : width - d]
        ).astype(np.uint8)
        costs[:, d:, k] = np.where(defined, distance, n_bits)

    return CostVolume(
        costs=costs,
        disparity_range=disparity_range,
        n_bits=n_bits,
        left_valid=left.valid,
        right_valid=right.valid,
    )


def defined_costs(volume: CostVolume) -> np.ndarray:
    """Mask of the costs backed by a left and a right census descriptor."""
    height, width, _ = volume.costs.shape
    defined = np.zeros(volume.costs.shape, dtype=bool)
    for k, d in enumerate(volume.disparity_range.values):
        d = int(d)
        if d < width:
            defined[:, d:, k] = (
                volume.left_valid[:, d:] & volume.right_valid[:, : width - d]
            )
    return defined


def neutral_costs(volume: CostVolume) -> np.ndarray:
    """
    Float costs for aggregation. Undefined entries take the mean of their
    pixel's defined costs, or the descriptor length when none is defined,
    so out-of-bounds disparities carry no penalty along the paths.
    """
    defined = defined_costs(volume)
    costs = volume.costs.astype(np.float32)
    count = defined.sum(axis=2, keepdims=True)
    total = np.where(defined, costs, 0.0).sum(axis=2, keepdims=True)
    fill = np.where(
        count > 0, total / np.maximum(count, 1), float(volume.n_bits)
    )
    return np.where(defined, costs, fill).astype(np.float32)


def _path_step(
    cost: np.ndarray, previous: np.ndarray, p1: float, p2: float
) -> np.ndarray:
    previous_min = previous.min(axis=1, keepdims=True)
    neighbors = np.full_like(previous, np.inf)
    neighbors[:, :-1] = previous[:, 1:]
    neighbors[:, 1:] = np.minimum(neighbors[:, 1:], previous[:, :-1])
    best = np.minimum(previous, neighbors + p1)
    best = np.minimum(best, previous_min + p2)
    return cost + best - previous_min


def _scan(cost: np.ndarray, diagonal: bool, p1: float, p2: float):
    """Path costs for a path running along +x (and +y when diagonal)."""
    path = np.empty_like(cost)
    path[:, 0] = cost[:, 0]
    for x in range(1, cost.shape[1]):
        if diagonal:
            path[0, x] = cost[0, x]
            path[1:, x] = _path_step(cost[1:, x], path[:-1, x - 1], p1, p2)
        else:
            path[:, x] = _path_step(cost[:, x], path[:, x - 1], p1, p2)
    return path


def aggregate_path(
    cost: np.ndarray, dx: int, dy: int, p1: float, p2: float
) -> np.ndarray:
    """Path costs of one direction, computed by reorienting the volume so
    the path runs along +x."""
    volume = cost
    transposed = dx == 0
    if transposed:
        volume = volume.transpose(1, 0, 2)
        dx, dy = dy, dx
    flip_x, flip_y = dx < 0, dy < 0
    if flip_x:
        volume = volume[:, ::-1]
    if flip_y:
        volume = volume[::-1]

    path = _scan(np.ascontiguousarray(volume), dy != 0, p1, p2)

    if flip_y:
        path = path[::-1]
    if flip_x:
        path = path[:, ::-1]
    if transposed:
        path = path.transpose(1, 0, 2)
    return path


def _right_winners(summed: np.ndarray, disparities: np.ndarray):
    height, width, count = summed.shape
    right = np.full(summed.shape, np.inf, dtype=summed.dtype)
    for k, d in enumerate(disparities):
        d = int(d)
        if d < width:
            right[:, : width - d, k] = summed[:, d:, k]
    return right.argmin(axis=2)


def sgm_aggregate(
    volume: CostVolume,
    p1: float = 10.0,
    p2: float = 120.0,
    subpixel: bool = True,
    lr_check: bool = True,
    lr_threshold: float = 1.0,
    uniqueness: bool = True,
    uniqueness_ratio: float = 0.95,
) -> DisparityMap:
    """
    Semi-global aggregation over eight paths followed by winner-take-all.

    Each path cost is L(p, d) = C(p, d) + min(L(q, d), L(q, d +- 1) + p1,
    min_k L(q, k) + p2) - min_k L(q, k), with q the previous pixel on the
    path. Undefined costs are neutralized first (see `neutral_costs`).
    Winners are refined by a parabola fit and invalidated by the
    left-right consistency and uniqueness checks. Both penalties set to
    +inf disable aggregation.

    Raises:
        ParameterError: Unless 0 < p1 < p2.
    """
    disabled = math.isinf(p1) and math.isinf(p2)
    if not disabled and not 0 < p1 < p2:
        handle_error_helper(
            ParameterError, f"SGM penalties need 0 < p1 < p2, got {p1}, {p2}"
        )

    cost = neutral_costs(volume)
    if disabled:
        summed = cost
    else:
        summed = np.zeros_like(cost)
        for dx, dy in PATH_DIRECTIONS:
            summed += aggregate_path(cost, dx, dy, p1, p2)

    height, width, count = summed.shape
    disparities = volume.disparity_range.values
    winner = summed.argmin(axis=2)
    rows, cols = np.indices((height, width))
    best = summed[rows, cols, winner]

    values = (disparities[winner]).astype(np.float64)
    valid = volume.left_valid.copy()
    # the winning match must land on a defined right descriptor
    match_cols = cols - disparities[winner]
    valid &= match_cols >= 0
    valid &= volume.right_valid[rows, np.clip(match_cols, 0, width - 1)]

    if uniqueness and count > 3:
        k = np.arange(count)[None, None, :]
        adjacent = np.abs(k - winner[..., None]) <= 1
        second = np.where(adjacent, np.inf, summed).min(axis=2)
        valid &= ~(best >= uniqueness_ratio * second)

    if subpixel:
        interior = (winner > 0) & (winner < count - 1)
        below = summed[rows, cols, np.clip(winner - 1, 0, count - 1)]
        above = summed[rows, cols, np.clip(winner + 1, 0, count - 1)]
        curvature = below.astype(np.float64) - 2 * best + above
        with np.errstate(divide="ignore", invalid="ignore"):
            offset = np.where(
                interior & (curvature > 0),
                (below - above) / (2 * curvature),
                0.0,
            )
        values += np.clip(offset, -0.5, 0.5)

    if lr_check:
        right_winner = _right_winners(summed, disparities)
        target = np.clip(cols - disparities[winner], 0, width - 1)
        right_values = disparities[right_winner[rows, target]]
        valid &= np.abs(disparities[winner] - right_values) <= lr_threshold

    values[~valid] = INVALID
    logger.debug(
        f"SGM: {int(valid.sum())}/{valid.size} valid pixels "
        f"(paths={'off' if disabled else len(PATH_DIRECTIONS)})"
    )
    return DisparityMap(
        values=values, disparity_range=volume.disparity_range
    )


def compute_disparity(
    pair: RectifiedStereoPair, params: StereoParams | None = None
) -> DisparityMap:
    """Census costs plus SGM aggregation in one call."""
    params = params or StereoParams()
    volume = build_cost_volume(
        pair, params.disparity_range, params.census_window
    )
    return sgm_aggregate(
        volume,
        params.p1,
        params.p2,
        subpixel=params.subpixel,
        lr_check=params.lr_check,
        lr_threshold=params.lr_threshold,
        uniqueness=params.uniqueness,
        uniqueness_ratio=params.uniqueness_ratio,
    )


def disparity_to_depth(d: float, calib: StereoCalibration) -> float:
    """Z = focal_length * baseline / d.

    Raises:
        InvalidDisparityError: If d is not positive.
    """
    if not d > 0:
        handle_error_helper(
            InvalidDisparityError, f"Disparity must be positive, got {d}"
        )
    return calib.focal_length * calib.baseline / d


def depth_range(
    disparity_range: DisparityRange, calib: StereoCalibration
) -> tuple[float, float]:
    """(near, far) depths implied by a disparity range; far is inf when
    d_min is 0."""
    near = disparity_to_depth(disparity_range.d_max, calib)
    if disparity_range.d_min == 0:
        return near, math.inf
    return near, disparity_to_depth(disparity_range.d_min, calib)


def invalid_fraction(disparity: DisparityMap) -> float:
    if not disparity.values.size:
        return 1.0
    return float(1.0 - disparity.valid.mean())


def triangulate_color_cloud(
    disparity: DisparityMap,
    pair: RectifiedStereoPair,
    color_image: np.ndarray,
    calib: StereoCalibration | None,
) -> ColoredPointCloud:
    """
    Back-projects valid disparities into the reference camera frame and
    keeps the points that project inside the color image, colored by the
    nearest color pixel.

    Raises:
        ConfigurationError: If no calibration is given.
        ParameterError: If the disparity map and the pair differ in size.
    """
    if calib is None:
        handle_error_helper(ConfigurationError, "Missing stereo calibration")
    if disparity.values.shape != pair.shape:
        handle_error_helper(
            ParameterError,
            f"Disparity map {disparity.values.shape} does not match the "
            f"stereo pair {pair.shape}",
        )

    color_image = np.asarray(color_image)
    if color_image.ndim == 2:
        color_image = np.repeat(color_image[..., None], 3, axis=2)
    color_height, color_width = color_image.shape[:2]

    v, u = np.nonzero(disparity.valid)
    d = disparity.values[v, u]
    z = calib.focal_length * calib.baseline / d
    x = (u - calib.cx) * z / calib.focal_length
    y = (v - calib.cy) * z / calib.focal_length
    positions = np.column_stack([x, y, z])

    camera = calib.color
    in_color = calib.color_registration.apply(positions)
    with np.errstate(divide="ignore", invalid="ignore"):
        cu = np.rint(camera.fx * in_color[:, 0] / in_color[:, 2] + camera.cx)
        cv = np.rint(camera.fy * in_color[:, 1] / in_color[:, 2] + camera.cy)
    keep = (
        (in_color[:, 2] > 0)
        & (cu >= 0)
        & (cu < color_width)
        & (cv >= 0)
        & (cv < color_height)
    )
    colors = color_image[cv[keep].astype(int), cu[keep].astype(int), :3]

    logger.debug(
        f"Triangulated {int(keep.sum())} colored points "
        f"from {len(d)} valid disparities"
    )
    return ColoredPointCloud(
        positions=positions[keep], colors=colors, frame_id="camera"
    )
