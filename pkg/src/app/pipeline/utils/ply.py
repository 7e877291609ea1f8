from pathlib import Path

import numpy as np
import plyfile

from ...settings.logging import logger
from ..schemas.geometry import ColoredPointCloud
from .error_handler import FileFormatError, PlyParseError, handle_error_helper

POSITION_TYPES = {"f4", "f8", "float32", "float64", "float", "double"}
COLOR_TYPES = {"u1", "uint8", "uchar"}
COLOR_NAMES = ("red", "green", "blue")


def _property_types(element: plyfile.PlyElement) -> dict[str, str]:
    return {
        prop.name: getattr(prop, "val_dtype", "list").lstrip("<>=|")
        for prop in element.properties
    }


def _header_size(path: Path) -> int:
    with open(path, "rb") as stream:
        size = 0
        for raw in stream:
            size += len(raw)
            if raw.strip() == b"end_header":
                return size
    return size


def _header_lines(path: Path) -> int:
    with open(path, "rb") as stream:
        for number, raw in enumerate(stream, start=1):
            if raw.strip() == b"end_header":
                return number
    return 0


def _read(path: Path) -> plyfile.PlyData:
    try:
        return plyfile.PlyData.read(str(path))
    except plyfile.PlyHeaderParseError as e:
        raise PlyParseError(
            f"Malformed PLY header in {path}: {e.message}", line=e.line
        ) from e
    except plyfile.PlyElementParseError as e:
        raise _element_error(path, e) from e
    except (ValueError, EOFError) as e:
        raise PlyParseError(f"Unreadable PLY body in {path}: {e}") from e


def _element_error(
    path: Path, e: plyfile.PlyElementParseError
) -> PlyParseError:
    row = e.row if e.row is not None else 0
    with open(path, "rb") as stream:
        is_text = b"format ascii" in stream.read(256)
    reason = "Truncated" if "end-of-file" in e.message else "Malformed"
    message = f"{reason} PLY body in {path}: {e.message} at row {row}"
    if is_text:
        return PlyParseError(message, line=_header_lines(path) + row + 1)
    return PlyParseError(message, offset=_header_size(path))


def load_ply(path: str | Path, frame_id: str = "map") -> ColoredPointCloud:
    """
    Reads an ASCII or binary little-endian PLY point cloud.

    Positions come from the float `x`, `y`, `z` vertex properties and
    colors from optional uchar `red`, `green`, `blue`. A file without
    color yields black points and a cloud flagged `colorless`.

    Raises:
        FileFormatError: If the file does not exist.
        PlyParseError: On malformed header, truncated body or unsupported
            property types.
    """
    path = Path(path)
    if not path.is_file():
        handle_error_helper(FileFormatError, f"PLY file {path} not found")

    data = _read(path)
    if "vertex" not in data:
        raise PlyParseError(f"PLY file {path} has no vertex element")
    vertex = data["vertex"]
    types = _property_types(vertex)

    for name in ("x", "y", "z"):
        if name not in types:
            raise PlyParseError(f"PLY vertex property `{name}` missing")
        if types[name] not in POSITION_TYPES:
            raise PlyParseError(
                f"Unsupported type `{types[name]}` for vertex property "
                f"`{name}`; expected float or double"
            )

    records = vertex.data
    positions = np.column_stack(
        [np.asarray(records[name], dtype=np.float64) for name in "xyz"]
    )

    has_color = all(name in types for name in COLOR_NAMES)
    if has_color:
        for name in COLOR_NAMES:
            if types[name] not in COLOR_TYPES:
                raise PlyParseError(
                    f"Unsupported type `{types[name]}` for vertex property "
                    f"`{name}`; expected uchar"
                )
        colors = np.column_stack(
            [np.asarray(records[name]) for name in COLOR_NAMES]
        )
    else:
        colors = np.zeros((len(positions), 3), dtype=np.uint8)

    logger.debug(f"Loaded {len(positions)} points from {path}")
    return ColoredPointCloud(
        positions=positions,
        colors=colors,
        frame_id=frame_id,
        colorless=not has_color,
    )


def save_ply(
    cloud: ColoredPointCloud,
    path: str | Path,
    binary: bool = True,
    extra: dict[str, np.ndarray] | None = None,
) -> Path:
    """
    Writes a cloud as PLY with float32 positions, uchar colors and optional
    extra per-vertex scalar properties (e.g. a canopy flag or cluster id).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = extra or {}

    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if not cloud.colorless:
        fields += [(name, "u1") for name in COLOR_NAMES]
    for name, values in extra.items():
        values = np.asarray(values)
        if len(values) != len(cloud):
            handle_error_helper(
                FileFormatError,
                f"Property `{name}` has {len(values)} values "
                f"for {len(cloud)} points",
            )
        dtype = "<f4" if values.dtype.kind == "f" else "<i4"
        fields.append((name, dtype))

    records = np.empty(len(cloud), dtype=fields)
    for axis, name in enumerate("xyz"):
        records[name] = cloud.positions[:, axis]
    if not cloud.colorless:
        for channel, name in enumerate(COLOR_NAMES):
            records[name] = cloud.colors[:, channel]
    for name, values in extra.items():
        records[name] = values

    element = plyfile.PlyElement.describe(records, "vertex")
    plyfile.PlyData([element], text=not binary, byte_order="<").write(
        str(path)
    )
    logger.debug(f"Saved {len(cloud)} points to {path}")
    return path
