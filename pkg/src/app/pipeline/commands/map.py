import argparse
from pathlib import Path

from ...settings.logging import logger
from ..schemas.mapping import OutlierStage
from ..services.mapping_service import (
    map_checksum,
    pair_frames_with_poses,
    select_points,
    stitch_frames,
)
from ..utils.error_handler import EXIT_OK, EmptyInputError, handle_error_helper
from ..utils.formats import load_trajectory, write_json
from ..utils.ply import load_ply, save_ply
from .common import CommandContext, discover_clouds


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "map", help="stitch per-frame clouds into a row map"
    )
    parser.add_argument("clouds", type=Path, help="directory of frame PLYs")
    parser.add_argument("--trajectory", type=Path, required=True)
    parser.add_argument("--output", type=Path, required=True)


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    cfg = context.config
    paths = discover_clouds(args.clouds) if args.clouds.is_dir() else {}
    if not paths:
        handle_error_helper(
            EmptyInputError, f"No frame_NNNN.ply clouds in {args.clouds}"
        )
    poses = load_trajectory(args.trajectory)
    clouds = {
        index: load_ply(path, frame_id="vehicle")
        for index, path in paths.items()
    }
    row = stitch_frames(pair_frames_with_poses(clouds, poses), cfg.merge_cell)
    cloud = select_points(
        row.cloud, cfg.reconstruction_params(), OutlierStage.MAP
    )
    save_ply(cloud, args.output)
    write_json(
        {
            "frame_count": row.frame_count,
            "merge_cell": row.merge_cell,
            "points": len(cloud),
            "checksum": map_checksum(cloud),
        },
        args.output.with_suffix(".json"),
    )
    logger.info(f"Row map with {len(cloud)} points saved to {args.output}")
    return EXIT_OK
