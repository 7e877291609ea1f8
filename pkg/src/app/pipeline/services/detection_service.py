import asyncio
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from ...settings.logging import logger
from ..schemas.detection import (
    SCORE_ORDER,
    ClassLabel,
    ClassScores,
    ClusterCounts,
    DatasetSplit,
    DetectionBox,
    DetectionParams,
    Detections,
    OverlapRule,
    PatchGrid,
    ProbabilityMaps,
)
from ..utils.error_handler import (
    ClassifierError,
    ParameterError,
    handle_error_helper,
)
from .classifier_service import PatchClassifier

DEFAULT_LABEL_THRESHOLDS = {
    ClassLabel.BUNCH: 0.20,
    ClassLabel.POLE: 0.20,
    ClassLabel.WOOD: 0.20,
}
BOX_COLOR = (255, 0, 0)


def _positions(length: int, window: int, stride: int) -> list[int]:
    positions = list(range(0, length - window + 1, stride))
    if positions[-1] != length - window:
        positions.append(length - window)
    return positions


def build_patch_grid(
    width: int, height: int, window: int = 80, stride: int = 40
) -> PatchGrid:
    """
    Sliding-window grid whose last position on each axis is flushed to the
    image edge, together with the flat-index look-up table of every patch.

    Raises:
        ParameterError: If the window exceeds the image or stride < 1.
    """
    if window < 1 or window > min(width, height):
        handle_error_helper(
            ParameterError,
            f"Window {window} does not fit a {width}x{height} image",
        )
    if stride < 1:
        handle_error_helper(ParameterError, f"Stride must be >= 1: {stride}")

    xs = _positions(width, window, stride)
    ys = _positions(height, window, stride)
    offsets = (
        np.arange(window)[:, None] * width + np.arange(window)[None, :]
    ).ravel()
    origins = (
        np.asarray(ys)[:, None] * width + np.asarray(xs)[None, :]
    ).ravel()
    return PatchGrid(
        width=width,
        height=height,
        window=window,
        stride=stride,
        xs=tuple(xs),
        ys=tuple(ys),
        lookup=origins[:, None] + offsets[None, :],
    )


def extract_patches(image: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Gathers all patches, shape (P, window, window[, C])."""
    if image.shape[:2] != (grid.height, grid.width):
        handle_error_helper(
            ParameterError,
            f"Image shape {image.shape[:2]} does not match grid "
            f"{(grid.height, grid.width)}",
        )
    channels = image.shape[2:]
    flat = image.reshape(grid.height * grid.width, *channels)
    return flat[grid.lookup].reshape(
        grid.patch_count, grid.window, grid.window, *channels
    )


def label_patch(
    labels: np.ndarray,
    thresholds: Mapping[ClassLabel, float] | None = None,
) -> ClassLabel:
    """
    Patch label from its pixel labels: bunch, pole then wood win when
    their pixel count strictly exceeds threshold x total pixels; otherwise
    leaves if they outnumber background, else background.
    """
    thresholds = {**DEFAULT_LABEL_THRESHOLDS, **(thresholds or {})}
    counts = np.bincount(np.asarray(labels).ravel(), minlength=5)
    total = labels.size
    for label in (ClassLabel.BUNCH, ClassLabel.POLE, ClassLabel.WOOD):
        if counts[label] > thresholds[label] * total:
            return label
    if counts[ClassLabel.LEAVES] > counts[ClassLabel.BACKGROUND]:
        return ClassLabel.LEAVES
    return ClassLabel.BACKGROUND


def label_patches(
    label_map: np.ndarray,
    grid: PatchGrid,
    thresholds: Mapping[ClassLabel, float] | None = None,
) -> list[ClassLabel]:
    return [
        label_patch(patch, thresholds)
        for patch in extract_patches(label_map, grid)
    ]


def patch_class_histogram(labels: Sequence[ClassLabel]) -> dict[str, int]:
    """Number of patches per class, keyed by class name."""
    histogram = {label.title: 0 for label in SCORE_ORDER}
    for label in labels:
        histogram[ClassLabel(label).title] += 1
    return histogram


def resize_bicubic(patch: np.ndarray, target: int) -> np.ndarray:
    """
    Upscales a square color patch to target x target pixels with
    separable bicubic (Catmull-Rom) resampling.

    Raises:
        ParameterError: When asked to downscale.
    """
    side = max(patch.shape[:2])
    if target < side:
        handle_error_helper(
            ParameterError, f"Cannot downscale a {side}px patch to {target}px"
        )
    if target == patch.shape[0] == patch.shape[1]:
        return patch.copy()
    image = Image.fromarray(np.ascontiguousarray(patch, dtype=np.uint8))
    return np.asarray(
        image.resize((target, target), Image.Resampling.BICUBIC)
    )


async def classify_patch(
    patch: np.ndarray,
    classifier: PatchClassifier,
    patch_id: int = 0,
) -> ClassScores:
    """Scores one patch, turning any classifier failure into a
    ClassifierError carrying the patch id."""
    try:
        return await classifier.classify(patch_id, patch)
    except ClassifierError:
        raise
    except Exception as e:
        logger.error(f"Classifier failed on patch {patch_id}: {e}")
        raise ClassifierError(str(e) or type(e).__name__, patch_id) from e


async def classify_patches(
    patches: np.ndarray,
    classifier: PatchClassifier,
    jobs: int = 1,
    input_size: int | None = None,
) -> list[ClassScores]:
    """Classifies patches concurrently; results keep patch-id order."""
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def _run(patch_id: int) -> ClassScores:
        async with semaphore:
            patch = patches[patch_id]
            if input_size is not None:
                patch = resize_bicubic(patch, input_size)
            return await classify_patch(patch, classifier, patch_id)

    return list(await asyncio.gather(*(_run(i) for i in range(len(patches)))))


def assemble_probability_maps(
    grid: PatchGrid,
    scores: Sequence[ClassScores],
    rule: OverlapRule = OverlapRule.MEAN,
) -> ProbabilityMaps:
    """
    Spreads per-patch scores back onto the image. With the mean rule a
    pixel's score is the average over all patches covering it; with the
    max rule it is the per-class maximum renormalized to sum 1.
    """
    if len(scores) != grid.patch_count:
        handle_error_helper(
            ParameterError,
            f"{len(scores)} scores for {grid.patch_count} patches",
        )
    accumulated = np.zeros((grid.height, grid.width, len(SCORE_ORDER)))
    coverage = np.zeros((grid.height, grid.width), dtype=np.int64)
    window = grid.window
    for patch_id, patch_scores in enumerate(scores):
        x, y = grid.origin(patch_id)
        region = (slice(y, y + window), slice(x, x + window))
        values = np.asarray(patch_scores.as_tuple())
        if rule is OverlapRule.MEAN:
            accumulated[region] += values
        else:
            np.maximum(accumulated[region], values, out=accumulated[region])
        coverage[region] += 1

    covered = coverage > 0
    if rule is OverlapRule.MEAN:
        accumulated[covered] /= coverage[covered][:, None]
    else:
        accumulated[covered] /= accumulated[covered].sum(axis=1)[:, None]
    return ProbabilityMaps(scores=accumulated, coverage=coverage)


def binarize(score_map: np.ndarray, threshold: float = 0.85) -> np.ndarray:
    """Pixels scoring strictly above the threshold."""
    score_map = np.asarray(score_map, dtype=np.float64)
    if score_map.size and (score_map.min() < 0 or score_map.max() > 1):
        handle_error_helper(ParameterError, "Scores must lie in [0, 1]")
    return score_map > threshold


def disk(diameter: int) -> np.ndarray:
    """Circular structuring element of odd diameter."""
    if diameter < 1 or diameter % 2 == 0:
        handle_error_helper(
            ParameterError,
            f"Structuring element diameter must be odd, got {diameter}",
        )
    radius = diameter // 2
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return xx**2 + yy**2 <= (radius + 0.5) ** 2


def morphological_close(binary: np.ndarray, diameter: int = 5) -> np.ndarray:
    """
    Dilation followed by erosion with a disk, computed on a zero-padded
    canvas so the result is extensive and idempotent at the image border.
    """
    element = disk(diameter)
    radius = diameter // 2
    padded = np.pad(np.asarray(binary, dtype=bool), radius)
    closed = ndimage.binary_erosion(
        ndimage.binary_dilation(padded, structure=element),
        structure=element,
        border_value=0,
    )
    if radius:
        closed = closed[radius:-radius, radius:-radius]
    return closed


def connected_components(binary: np.ndarray) -> list[np.ndarray]:
    """
    8-connected components as (N, 2) arrays of (x, y) pixels, ordered by
    their first pixel in raster order.
    """
    labeled, count = ndimage.label(
        np.asarray(binary, dtype=bool), structure=np.ones((3, 3))
    )
    if count == 0:
        return []
    rows, cols = np.nonzero(labeled)
    ids = labeled[rows, cols]
    order = np.argsort(ids, kind="stable")
    splits = np.cumsum(np.bincount(ids, minlength=count + 1)[1:])[:-1]
    pixels = np.column_stack([cols, rows])[order]
    return np.split(pixels, splits)


def bounding_boxes(
    components: Sequence[np.ndarray], min_area: int = 25
) -> list[DetectionBox]:
    """Tight boxes of components holding at least `min_area` pixels."""
    if min_area < 0:
        handle_error_helper(ParameterError, "min_area must be >= 0")
    boxes = []
    for pixels in components:
        pixels = np.asarray(pixels).reshape(-1, 2)
        if len(pixels) == 0 or len(pixels) < min_area:
            continue
        (x_min, y_min), (x_max, y_max) = pixels.min(axis=0), pixels.max(axis=0)
        boxes.append(
            DetectionBox(
                x_min=int(x_min),
                y_min=int(y_min),
                x_max=int(x_max),
                y_max=int(y_max),
                area=len(pixels),
            )
        )
    return boxes


def _box_scores(box: DetectionBox, maps: ProbabilityMaps) -> ClassScores:
    region = maps.scores[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1]
    mean = region.reshape(-1, len(SCORE_ORDER)).mean(axis=0)
    return ClassScores.from_sequence(np.clip(mean / mean.sum(), 0.0, 1.0))


async def detect_bunches(
    image: np.ndarray,
    classifier: PatchClassifier,
    params: DetectionParams | None = None,
    jobs: int = 1,
) -> Detections:
    """
    Full detection chain on one color image: patch grid, classification,
    probability maps, thresholding of the bunch map, closing, connected
    components and boxes. Each box carries the mean scores inside it.
    """
    params = params or DetectionParams()
    height, width = image.shape[:2]
    grid = build_patch_grid(width, height, params.window, params.stride)
    patches = extract_patches(image, grid)
    scores = await classify_patches(
        patches, classifier, jobs, params.classifier_input
    )
    maps = assemble_probability_maps(grid, scores, params.overlap_rule)
    mask = morphological_close(
        binarize(maps.channel(ClassLabel.BUNCH), params.threshold),
        params.closing_diameter,
    )
    boxes = [
        box.model_copy(update={"scores": _box_scores(box, maps)})
        for box in bounding_boxes(connected_components(mask), params.min_area)
    ]
    logger.info(
        f"Classified {grid.patch_count} patches, detected {len(boxes)} "
        "bunch regions"
    )
    return Detections(boxes=boxes, maps=maps, mask=mask, patch_scores=scores)


def draw_boxes(
    image: np.ndarray,
    boxes: Sequence[DetectionBox],
    color: tuple[int, int, int] = BOX_COLOR,
    thickness: int = 2,
) -> np.ndarray:
    """Copy of a color image with box outlines drawn on it."""
    canvas = Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8))
    draw = ImageDraw.Draw(canvas)
    for box in boxes:
        draw.rectangle(
            (box.x_min, box.y_min, box.x_max, box.y_max),
            outline=color,
            width=thickness,
        )
    return np.asarray(canvas)


def match_detections(
    boxes: Sequence[DetectionBox],
    truth_regions: Sequence[np.ndarray],
    iou_threshold: float | None = None,
) -> ClusterCounts:
    """
    Greedy one-to-one matching of boxes to ground-truth regions by
    descending overlap (truth pixels inside the box). A pair counts as a
    detection when it overlaps at all, or when its IoU reaches
    `iou_threshold` if one is given.
    """
    pairs = []
    for b, box in enumerate(boxes):
        box_area = box.width * box.height
        for t, region in enumerate(truth_regions):
            region = np.asarray(region).reshape(-1, 2)
            inside = (
                (region[:, 0] >= box.x_min)
                & (region[:, 0] <= box.x_max)
                & (region[:, 1] >= box.y_min)
                & (region[:, 1] <= box.y_max)
            )
            overlap = int(inside.sum())
            if overlap == 0:
                continue
            iou = overlap / (box_area + len(region) - overlap)
            if iou_threshold is not None and iou < iou_threshold:
                continue
            pairs.append((-overlap, b, t))

    matched_boxes: set[int] = set()
    matched_truths: set[int] = set()
    for _, b, t in sorted(pairs):
        if b in matched_boxes or t in matched_truths:
            continue
        matched_boxes.add(b)
        matched_truths.add(t)

    true_detections = len(matched_boxes)
    return ClusterCounts(
        gc=len(truth_regions),
        t_gc=true_detections,
        f_gc=len(boxes) - true_detections,
        n_gc=len(truth_regions) - true_detections,
    )


def split_dataset(items: Sequence, seed: int) -> DatasetSplit:
    """
    Seeded shuffle into train/validation/test: floor(0.7 n) items form
    the training pool, the rest is test; floor(0.75 x pool) of the pool
    is train, the rest validation.
    """
    if len(items) < 4:
        handle_error_helper(
            ParameterError, f"Need at least 4 items to split, got {len(items)}"
        )
    order = np.random.Generator(np.random.Philox(seed)).permutation(len(items))
    shuffled = [items[i] for i in order]
    pool = 7 * len(items) // 10
    train = 3 * pool // 4
    return DatasetSplit(
        train=shuffled[:train],
        validation=shuffled[train:pool],
        test=shuffled[pool:],
    )
