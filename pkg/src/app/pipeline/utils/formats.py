import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from dotenv import dotenv_values

from ..schemas.geometry import RigidTransform
from ..schemas.mapping import FramePose
from ..schemas.stereo import ColorCamera, StereoCalibration
from .error_handler import (
    ConfigurationError,
    FileFormatError,
    ParameterError,
    handle_error_helper,
)


def read_key_values(path: str | Path) -> dict[str, str]:
    """Plain-text `key=value` file, `#` comments allowed."""
    path = Path(path)
    if not path.is_file():
        handle_error_helper(FileFormatError, f"File {path} not found")
    return {
        key: value
        for key, value in dotenv_values(path).items()
        if value is not None
    }


def parse_numbers(text: str, expected: int | None = None) -> list[float]:
    try:
        numbers = [float(item) for item in text.replace(",", " ").split()]
    except ValueError as e:
        raise ParameterError(f"Not a number list: `{text}` ({e})") from e
    if expected is not None and len(numbers) != expected:
        raise ParameterError(
            f"Expected {expected} numbers, got {len(numbers)} in `{text}`"
        )
    return numbers


def load_calibration(path: str | Path) -> StereoCalibration:
    """
    Reads a key-value calibration file with keys focal_length_px,
    baseline_m, cx, cy, color_registration (12 numbers, 3x4 row-major) and
    the optional color_fx, color_fy, color_cx, color_cy, color_width,
    color_height and camera_to_vehicle.

    Raises:
        ConfigurationError: If a required key is missing or malformed.
    """
    values = read_key_values(path)
    required = ["focal_length_px", "baseline_m", "cx", "cy"]
    missing = [key for key in required if key not in values]
    if missing:
        handle_error_helper(
            ConfigurationError,
            f"Calibration {path} misses keys: {', '.join(missing)}",
        )
    try:
        color_camera = None
        if "color_fx" in values:
            color_camera = ColorCamera(
                fx=float(values["color_fx"]),
                fy=float(values.get("color_fy", values["color_fx"])),
                cx=float(values.get("color_cx", values["cx"])),
                cy=float(values.get("color_cy", values["cy"])),
                width=int(values["color_width"])
                if "color_width" in values
                else None,
                height=int(values["color_height"])
                if "color_height" in values
                else None,
            )
        registration = RigidTransform.identity()
        if "color_registration" in values:
            registration = RigidTransform.from_matrix(
                parse_numbers(values["color_registration"], 12)
            )
        to_vehicle = RigidTransform.identity()
        if "camera_to_vehicle" in values:
            to_vehicle = RigidTransform.from_matrix(
                parse_numbers(values["camera_to_vehicle"], 12)
            )
        return StereoCalibration(
            focal_length=float(values["focal_length_px"]),
            baseline=float(values["baseline_m"]),
            cx=float(values["cx"]),
            cy=float(values["cy"]),
            color_registration=registration,
            color_camera=color_camera,
            camera_to_vehicle=to_vehicle,
        )
    except (ValueError, ParameterError) as e:
        handle_error_helper(
            ConfigurationError, f"Malformed calibration {path}: {e}"
        )


def _matrix_text(transform: RigidTransform) -> str:
    return " ".join(repr(float(v)) for v in transform.as_matrix().ravel())


def save_calibration(calib: StereoCalibration, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"focal_length_px={calib.focal_length!r}",
        f"baseline_m={calib.baseline!r}",
        f"cx={calib.cx!r}",
        f"cy={calib.cy!r}",
        f'color_registration="{_matrix_text(calib.color_registration)}"',
        f'camera_to_vehicle="{_matrix_text(calib.camera_to_vehicle)}"',
    ]
    if calib.color_camera is not None:
        camera = calib.color_camera
        lines += [
            f"color_fx={camera.fx!r}",
            f"color_fy={camera.fy!r}",
            f"color_cx={camera.cx!r}",
            f"color_cy={camera.cy!r}",
        ]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_trajectory(path: str | Path) -> list[FramePose]:
    """
    Reads one pose per line: frame_index followed by the 12 numbers of a
    3x4 row-major pose matrix. Blank lines and `#` comments are skipped.

    Raises:
        FileFormatError: If the file is missing.
        ParameterError: Naming the offending line on malformed content or
            non-increasing frame indices.
    """
    path = Path(path)
    if not path.is_file():
        handle_error_helper(FileFormatError, f"Trajectory {path} not found")
    poses: list[FramePose] = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != 13:
            handle_error_helper(
                ParameterError,
                f"{path}:{number}: expected 13 fields, got {len(fields)}",
            )
        try:
            frame_index = int(fields[0])
            pose = RigidTransform.from_matrix([float(f) for f in fields[1:]])
        except ValueError as e:
            handle_error_helper(ParameterError, f"{path}:{number}: {e}")
        if poses and frame_index <= poses[-1].frame_index:
            handle_error_helper(
                ParameterError,
                f"{path}:{number}: frame index {frame_index} does not "
                "increase",
            )
        poses.append(FramePose(frame_index=frame_index, pose=pose))
    return poses


def save_trajectory(poses: Sequence[FramePose], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{p.frame_index} {_matrix_text(p.pose)}" for p in poses]
    path.write_text("\n".join(lines) + "\n")
    return path


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(payload: Any, path: str | Path) -> Path:
    """Deterministic JSON: sorted keys, NaN/inf written as null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"
    )
    return path


def read_json(path: str | Path) -> Any:
    path = Path(path)
    if not path.is_file():
        handle_error_helper(FileFormatError, f"JSON file {path} not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        handle_error_helper(FileFormatError, f"Malformed JSON {path}: {e}")


def write_csv(
    rows: Iterable[Sequence[Any]], header: Sequence[str], path: str | Path
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.9g}" if isinstance(v, float) else v for v in row]
            )
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        handle_error_helper(FileFormatError, f"CSV file {path} not found")
    with open(path, newline="") as stream:
        return list(csv.DictReader(stream))
