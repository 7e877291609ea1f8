import argparse
from pathlib import Path

import numpy as np

from ...settings.logging import logger
from ..schemas.synth import GroundTruthBundle, SyntheticRowSpec
from ..services.synth_service import (
    generate_annotated_image,
    generate_row,
    make_rng,
    render_stereo_frames,
)
from ..utils.error_handler import EXIT_OK
from ..utils.formats import (
    save_calibration,
    save_trajectory,
    write_csv,
    write_json,
)
from ..utils.imaging import save_color, save_gray, save_label_map
from ..utils.ply import save_ply
from .common import CommandContext, frame_name


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser(
        "synth",
        help="generate synthetic rows, stereo frames or annotated images",
    )
    parser.add_argument("output", type=Path, help="output directory")
    parser.add_argument(
        "--kind", choices=("row", "frames", "images"), default="row"
    )


def save_row_truth(
    bundle: GroundTruthBundle, spec: SyntheticRowSpec, output: Path
) -> None:
    """Row cloud with construction labels, per-plant truth and the
    matching manual measurements."""
    save_ply(
        bundle.cloud,
        output / "row.ply",
        extra={"label": bundle.labels, "plant": bundle.assignments},
    )
    lateral, _, vertical = spec.semi_axes
    write_csv(
        (
            [i, *center, volume, height]
            for i, (center, volume, height) in enumerate(
                zip(
                    bundle.plant_centers.tolist(),
                    bundle.plant_volumes,
                    bundle.plant_heights,
                )
            )
        ),
        ["plant_id", "x", "y", "z", "volume", "height"],
        output / "truth.csv",
    )
    write_csv(
        ([i, 2.0 * lateral, 2.0 * vertical] for i in range(spec.plant_count)),
        ["plant_id", "depth", "height"],
        output / "manual.csv",
    )


def synth_row(context: CommandContext, output: Path) -> None:
    spec = context.config.row_spec()
    save_row_truth(generate_row(spec), spec, output)


def synth_frames(context: CommandContext, output: Path) -> None:
    spec = context.config.row_spec()
    rig = context.config.camera_rig()
    bundle = generate_row(spec)
    save_row_truth(bundle, spec, output)
    poses = rig.poses(spec)
    frames = render_stereo_frames(bundle, rig, poses, seed=spec.seed)
    directory = output / "frames"
    for frame in frames:
        index = frame.frame_index
        save_gray(
            frame.pair.left, directory / frame_name(index, "left", ".pgm")
        )
        save_gray(
            frame.pair.right, directory / frame_name(index, "right", ".pgm")
        )
        save_color(frame.color, directory / frame_name(index, "color", ".png"))
    save_calibration(rig.calibration(), directory / "calibration.txt")
    save_trajectory(poses, output / "trajectory.txt")


def synth_images(context: CommandContext, output: Path) -> None:
    cfg = context.config
    rng = make_rng(cfg.seed)
    counts = rng.integers(
        cfg.synth_min_bunches,
        cfg.synth_max_bunches,
        size=cfg.synth_images,
        endpoint=True,
    )
    truth = []
    for i, count in enumerate(counts.tolist()):
        scene = generate_annotated_image(
            cfg.scene_spec(count, cfg.seed * 1000 + i)
        )
        save_color(scene.image, output / f"image_{i:03d}.png")
        save_label_map(scene.labels, output / f"labels_{i:03d}.png")
        truth.append(
            {
                "image": f"image_{i:03d}.png",
                "bunches": count,
                "boxes": [
                    [*np.min(r, axis=0).tolist(), *np.max(r, axis=0).tolist()]
                    for r in scene.regions
                ],
            }
        )
    write_json(truth, output / "truth.json")


GENERATORS = {
    "row": synth_row,
    "frames": synth_frames,
    "images": synth_images,
}


async def run(args: argparse.Namespace, context: CommandContext) -> int:
    output: Path = args.output
    output.mkdir(parents=True, exist_ok=True)
    GENERATORS[args.kind](context, output)
    logger.info(f"Synthetic {args.kind} data written to {output}")
    return EXIT_OK
