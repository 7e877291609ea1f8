import argparse
from contextlib import AsyncExitStack
from pathlib import Path

import numpy as np

from ...settings.logging import logger
from ..schemas.detection import ClassLabel, Detections
from ..services.classifier_service import StreamClassifier, make_classifier
from ..services.detection_service import detect_bunches, draw_boxes
from ..utils.error_handler import EXIT_OK, EmptyInputError, handle_error_helper
from ..utils.formats import write_json
from ..utils.imaging import read_color, save_color, save_gray
from .common import CommandContext

IMAGE_SUFFIXES = {".png", ".ppm", ".jpg", ".jpeg"}


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "detect", help="sliding-window grape bunch detection"
    )
    parser.add_argument(
        "images", type=Path, nargs="+", help="images or directories"
    )
    parser.add_argument("--output", type=Path, required=True)
    parser.add_argument(
        "--draw", action="store_true", help="save images with red boxes"
    )
    parser.add_argument(
        "--maps", action="store_true", help="save bunch probability maps"
    )


def collect_images(paths: list[Path]) -> list[Path]:
    """Image files given directly or found in directories; label maps
    (labels_*.png) are skipped."""
    images = []
    for path in paths:
        candidates = sorted(path.iterdir()) if path.is_dir() else [path]
        images += [
            p
            for p in candidates
            if p.suffix.lower() in IMAGE_SUFFIXES
            and not p.name.startswith("labels_")
            and not p.stem.endswith(("_boxes", "_bunch"))
        ]
    return images


def detection_record(path: Path, detections: Detections, params) -> dict:
    height, width = detections.mask.shape
    return {
        "image": path.name,
        "width": width,
        "height": height,
        "window": params.window,
        "stride": params.stride,
        "boxes": [
            {
                "x_min": box.x_min,
                "y_min": box.y_min,
                "x_max": box.x_max,
                "y_max": box.y_max,
                "area": box.area,
                "scores": box.scores.model_dump() if box.scores else None,
            }
            for box in detections.boxes
        ],
        "patch_predictions": [
            scores.best.title for scores in detections.patch_scores
        ],
    }


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    cfg = context.config
    params = cfg.detection_params()
    images = collect_images(args.images)
    if not images:
        handle_error_helper(EmptyInputError, "No images to process")

    classifier = make_classifier(
        cfg.classifier, cfg.classifier_endpoint, cfg.classifier_timeout
    )
    records = []
    async with AsyncExitStack() as stack:
        if isinstance(classifier, StreamClassifier):
            await stack.enter_async_context(classifier)
        for path in images:
            image = read_color(path)
            detections = await detect_bunches(
                image, classifier, params, context.jobs
            )
            records.append(detection_record(path, detections, params))
            if args.draw:
                save_color(
                    draw_boxes(image, detections.boxes),
                    args.output / f"{path.stem}_boxes.png",
                )
            if args.maps:
                bunch = detections.maps.channel(ClassLabel.BUNCH)
                save_gray(
                    np.rint(bunch * 255.0).astype(np.uint8),
                    args.output / f"{path.stem}_bunch.png",
                )
            logger.info(f"{path.name}: {len(detections.boxes)} bunches")

    write_json(records, args.output / "detections.json")
    return EXIT_OK
