import argparse
from pathlib import Path

import numpy as np

from ...settings.logging import logger
from ..schemas.mapping import FrameReconstruction
from ..schemas.stereo import RectifiedStereoPair, StereoCalibration
from ..services.mapping_service import reconstruct_frame
from ..utils.error_handler import (
    EXIT_OK,
    EmptyInputError,
    PipelineError,
    handle_error_helper,
)
from ..utils.formats import load_calibration, write_json
from ..utils.imaging import read_color, read_gray
from ..utils.ply import save_ply
from .common import (
    CommandContext,
    FrameFiles,
    discover_frames,
    frame_name,
    run_in_threads,
)


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "reconstruct", help="stereo frames to per-frame colored clouds"
    )
    parser.add_argument("frames", type=Path, help="directory of frames")
    parser.add_argument(
        "--calibration",
        type=Path,
        help="calibration file (default: <frames>/calibration.txt)",
    )
    parser.add_argument("--output", type=Path, required=True)


def _reconstruct(
    frame: FrameFiles, calib: StereoCalibration, context: CommandContext
) -> FrameReconstruction:
    left = read_gray(frame.left)
    pair = RectifiedStereoPair(left=left, right=read_gray(frame.right))
    color = (
        read_color(frame.color)
        if frame.color is not None
        else np.repeat(left[..., None], 3, axis=2)
    )
    return reconstruct_frame(
        frame.index,
        pair,
        color,
        calib,
        context.config.stereo_params(),
        context.config.reconstruction_params(),
    )


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    """
    Reconstructs every frame of a directory. Frames that fail are skipped
    with a diagnostic; the command fails only when no frame succeeds.
    """
    if not args.frames.is_dir():
        handle_error_helper(
            EmptyInputError, f"Frame directory {args.frames} not found"
        )
    frames = discover_frames(args.frames)
    if not frames:
        handle_error_helper(EmptyInputError, f"No frames in {args.frames}")
    calib = load_calibration(
        args.calibration or args.frames / "calibration.txt"
    )

    results = await run_in_threads(
        lambda frame: _reconstruct(frame, calib, context),
        frames,
        context.jobs,
    )

    summary_frames, skipped = [], []
    for frame, result in zip(frames, results):
        if isinstance(result, BaseException):
            if not isinstance(result, (PipelineError, ValueError, OSError)):
                raise result
            logger.warning(f"Frame {frame.index} skipped: {result}")
            skipped.append({"frame": frame.index, "reason": str(result)})
            continue
        name = frame_name(frame.index, "frame", ".ply")
        save_ply(result.cloud, args.output / name)
        summary_frames.append(
            {
                "frame": frame.index,
                "triangulated": result.triangulated,
                "points": len(result.cloud),
                "invalid_fraction": result.invalid_fraction,
            }
        )
    if not summary_frames:
        handle_error_helper(
            EmptyInputError, f"None of {len(frames)} frames reconstructed"
        )

    write_json(
        {
            "frame_count": len(summary_frames),
            "frames": summary_frames,
            "skipped": skipped,
            "warning": bool(skipped),
            "total_points": sum(f["points"] for f in summary_frames),
        },
        args.output / "reconstruct_summary.json",
    )
    logger.info(
        f"Reconstructed {len(summary_frames)}/{len(frames)} frames "
        f"into {args.output}"
    )
    return EXIT_OK
