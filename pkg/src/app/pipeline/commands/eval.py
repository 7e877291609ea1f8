import argparse
from pathlib import Path
from typing import Any

from ...settings.logging import logger
from ..schemas.detection import (
    AggregationMode,
    ClassLabel,
    ClusterCounts,
    ClusterMetrics,
    ConfusionCounts,
    DetectionBox,
    PatchMetrics,
)
from ..services.detection_service import (
    build_patch_grid,
    connected_components,
    label_patches,
    match_detections,
    patch_class_histogram,
)
from ..services.metrics_service import (
    aggregate_cluster_metrics,
    confusion_from_labels,
    patch_metrics,
)
from ..utils.error_handler import (
    EXIT_OK,
    ConfigurationError,
    FileFormatError,
    handle_error_helper,
)
from ..utils.formats import read_json, write_json
from ..utils.imaging import read_label_map
from .common import CommandContext

BOX_KEYS = ("x_min", "y_min", "x_max", "y_max", "area")


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "eval", help="patch and bunch detection metrics"
    )
    parser.add_argument("--counts", type=Path, help="confusion counts JSON")
    parser.add_argument("--detections", type=Path, help="`detect` output")
    parser.add_argument(
        "--truth", type=Path, help="directory of labels_NNN.png maps"
    )
    parser.add_argument("--output", type=Path, required=True)


def patch_row(metrics: PatchMetrics) -> dict[str, float | None]:
    return {
        "ACC": metrics.acc,
        "BACC": metrics.bacc,
        "P": metrics.precision,
        "R": metrics.recall,
        "TNR": metrics.tnr,
    }


def cluster_row(metrics: ClusterMetrics) -> dict[str, float | None]:
    return {
        "ACC_GC": metrics.acc,
        "P_GC": metrics.precision,
        "R_GC": metrics.recall,
    }


def build_report(
    confusion: list[ConfusionCounts],
    images: list[ClusterCounts],
    total: int | None = None,
) -> dict[str, Any]:
    """Per-class patch metrics and corpus-level bunch metrics with both
    aggregation orders. Without an explicit `total` every class must
    share the first class's TP+FP+TN+FN."""
    report: dict[str, Any] = {}
    if confusion:
        if total is None:
            total = confusion[0].total
        report["patch_metrics"] = {
            c.label.title: patch_row(patch_metrics(c, total))
            for c in confusion
        }
        report["patch_counts"] = {
            c.label.title: {"TP": c.tp, "FP": c.fp, "TN": c.tn, "FN": c.fn}
            for c in confusion
        }
    if images:
        report["cluster_metrics"] = {
            mode.value: cluster_row(aggregate_cluster_metrics(images, mode))
            for mode in AggregationMode
        }
        report["cluster_counts"] = {
            "GC": sum(c.gc for c in images),
            "T_GC": sum(c.t_gc for c in images),
            "F_GC": sum(c.f_gc for c in images),
            "N_GC": sum(c.n_gc for c in images),
        }
    return report


def report_from_counts(path: Path) -> dict[str, Any]:
    payload = read_json(path)
    try:
        confusion = [
            ConfusionCounts(
                label=ClassLabel[entry["label"].upper()],
                tp=entry["tp"],
                fp=entry["fp"],
                tn=entry["tn"],
                fn=entry["fn"],
            )
            for entry in payload.get("classes", [])
        ]
        images = [
            ClusterCounts(**entry) for entry in payload.get("images", [])
        ]
    except (KeyError, TypeError, ValueError) as e:
        handle_error_helper(FileFormatError, f"Malformed counts {path}: {e}")
    return build_report(confusion, images, payload.get("total"))


def _truth_path(truth: Path, image: str) -> Path:
    """image_NNN.png pairs with labels_NNN.png."""
    suffix = Path(image).stem.split("_", 1)[-1]
    return truth / f"labels_{suffix}.png"


def report_from_detections(
    detections: Path, truth: Path, context: CommandContext
) -> dict[str, Any]:
    cfg = context.config
    true_labels: list[ClassLabel] = []
    predicted: list[ClassLabel] = []
    images, per_image = [], []
    for record in read_json(detections):
        label_map = read_label_map(_truth_path(truth, record["image"]))
        regions = connected_components(label_map == ClassLabel.BUNCH)
        boxes = [
            DetectionBox(**{k: box[k] for k in BOX_KEYS})
            for box in record["boxes"]
        ]
        counts = match_detections(boxes, regions, cfg.iou_threshold)
        images.append(counts)
        per_image.append({"image": record["image"], **counts.model_dump()})

        grid = build_patch_grid(
            record["width"],
            record["height"],
            record["window"],
            record["stride"],
        )
        true_labels += label_patches(label_map, grid, cfg.label_thresholds())
        predicted += [
            ClassLabel[name.upper()] for name in record["patch_predictions"]
        ]

    report = build_report(
        confusion_from_labels(true_labels, predicted), images, len(true_labels)
    )
    report["per_image"] = per_image
    report["patch_histogram"] = patch_class_histogram(true_labels)
    return report


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    if args.counts is not None:
        report = report_from_counts(args.counts)
    elif args.detections is not None and args.truth is not None:
        report = report_from_detections(args.detections, args.truth, context)
    else:
        handle_error_helper(
            ConfigurationError,
            "eval needs --counts or both --detections and --truth",
        )
    write_json(report, args.output)
    logger.info(f"Metrics report written to {args.output}")
    return EXIT_OK
