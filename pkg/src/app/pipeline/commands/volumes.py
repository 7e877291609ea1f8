import argparse
from pathlib import Path

import numpy as np

from ...settings.logging import logger
from ..schemas.volume import ManualMeasurement, PlantReport, VolumeSummary
from ..services.volume_service import estimate_plant, summarize
from ..utils.error_handler import (
    EXIT_OK,
    EmptyInputError,
    FileFormatError,
    ParameterError,
    handle_error_helper,
)
from ..utils.formats import read_csv, write_csv, write_json
from ..utils.ply import load_ply
from .common import CommandContext, run_in_threads


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "volumes", help="per-plant canopy volumes and height"
    )
    parser.add_argument("map", type=Path, help="row map PLY")
    parser.add_argument(
        "--clusters",
        type=Path,
        required=True,
        help="point_index,cluster_id CSV from `segment`",
    )
    parser.add_argument(
        "--manual", type=Path, help="plant_id,depth,height[,width] CSV"
    )
    parser.add_argument("--output", type=Path, required=True)


def read_clusters(path: Path, point_count: int) -> dict[int, np.ndarray]:
    rows = read_csv(path)
    try:
        indices = np.array([int(r["point_index"]) for r in rows], dtype=int)
        ids = np.array([int(r["cluster_id"]) for r in rows], dtype=int)
    except (KeyError, ValueError) as e:
        handle_error_helper(FileFormatError, f"Malformed clusters {path}: {e}")
    if len(indices) and (indices.min() < 0 or indices.max() >= point_count):
        handle_error_helper(
            ParameterError,
            f"Cluster file {path} references points outside the map",
        )
    return {
        int(cluster): indices[ids == cluster]
        for cluster in np.unique(ids)
        if cluster >= 0
    }


def read_manual(path: Path, default_width: float) -> list[ManualMeasurement]:
    try:
        return [
            ManualMeasurement(
                plant_id=int(row["plant_id"]),
                depth=float(row["depth"]),
                height=float(row["height"]),
                width=float(row.get("width") or default_width),
            )
            for row in read_csv(path)
        ]
    except (KeyError, ValueError) as e:
        handle_error_helper(FileFormatError, f"Malformed manual {path}: {e}")


PLANT_COLUMNS = ["ch", "obb", "aabb", "height", "degenerate"]


def _plant_row(report: PlantReport) -> list:
    return [
        report.plant_id,
        report.n_points,
        *report.og.values(),
        report.ch,
        report.obb,
        report.aabb,
        report.height,
        int(report.degenerate),
    ]


def summary_table(summary: VolumeSummary) -> dict:
    """Methods by statistics, the layout of a volume comparison table."""
    table = {
        method: stats.model_dump()
        for method, stats in summary.methods.items()
    }
    if summary.manual is not None:
        table["manual"] = summary.manual.model_dump()
    return {
        "plant_count": summary.plant_count,
        "volume_m3": table,
        "height_m": summary.height.model_dump(),
        "discrepancy_vs_manual": summary.discrepancy_vs_manual,
        "degenerate_plants": summary.degenerate_plants,
    }


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    cfg = context.config
    cloud = load_ply(args.map)
    clusters = read_clusters(args.clusters, len(cloud))
    plant_ids = sorted(clusters)
    if not plant_ids:
        handle_error_helper(
            EmptyInputError, f"No plant clusters in {args.clusters}"
        )

    results = await run_in_threads(
        lambda plant: estimate_plant(
            cloud.positions[clusters[plant]], plant, cfg.og_deltas
        ),
        plant_ids,
        context.jobs,
    )
    for result in results:
        if isinstance(result, BaseException):
            raise result
    reports = [r for r in results if isinstance(r, PlantReport)]

    write_csv(
        (_plant_row(r) for r in reports),
        ["plant_id", "n_points", *reports[0].og, *PLANT_COLUMNS],
        args.output / "plants.csv",
    )
    manual = (
        read_manual(args.manual, cfg.manual_width) if args.manual else None
    )
    summary = summarize(reports, manual)
    write_json(summary_table(summary), args.output / "volume_summary.json")
    logger.info(f"Volumes of {len(reports)} plants written to {args.output}")
    return EXIT_OK
