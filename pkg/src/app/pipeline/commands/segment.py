import argparse
from pathlib import Path

import numpy as np

from ...settings.logging import logger
from ..services.segmentation_service import segment_row
from ..utils.error_handler import EXIT_OK
from ..utils.formats import write_csv, write_json
from ..utils.ply import load_ply, save_ply
from .common import CommandContext


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "segment", help="canopy labeling and per-plant clustering"
    )
    parser.add_argument("map", type=Path, help="row map PLY")
    parser.add_argument("--output", type=Path, required=True)


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    cfg = context.config
    cloud = load_ply(args.map)
    result = segment_row(
        cloud,
        cfg.plant_count,
        cfg.segmentation_params(),
        ground_height=cfg.ground_height,
        row_axis=cfg.row_axis,
        spacing=cfg.plant_spacing,
        max_iterations=cfg.kmeans_max_iterations,
        centre_comb=cfg.centre_comb,
    )

    cluster_ids = np.full(len(cloud), -1, dtype=np.int64)
    for cluster in result.clusters:
        cluster_ids[cluster.indices] = cluster.cluster_id
    args.output.mkdir(parents=True, exist_ok=True)
    save_ply(
        cloud,
        args.output / "labeled.ply",
        extra={
            "canopy": result.labeling.flags.astype(np.int32),
            "cluster": cluster_ids,
        },
    )
    canopy = result.labeling.canopy_indices
    write_csv(
        zip(canopy.tolist(), cluster_ids[canopy].tolist()),
        ["point_index", "cluster_id"],
        args.output / "clusters.csv",
    )
    write_json(
        [
            {
                "cluster_id": c.cluster_id,
                "size": c.size,
                "centroid": c.centroid.as_array(),
            }
            for c in result.clusters
        ],
        args.output / "centroids.json",
    )
    logger.info(
        f"Segmented {len(canopy)}/{len(cloud)} canopy points into "
        f"{len(result.clusters)} plants"
    )
    return EXIT_OK
