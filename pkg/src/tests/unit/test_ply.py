import numpy as np
import pytest

from src.app.pipeline.schemas.geometry import ColoredPointCloud
from src.app.pipeline.utils.error_handler import (
    FileFormatError,
    PlyParseError,
)
from src.app.pipeline.utils.ply import load_ply, save_ply


@pytest.fixture
def cloud():
    return ColoredPointCloud(
        positions=[[0.0, 1.0, 2.0], [-1.5, 0.25, 3.0], [4.0, 5.0, 6.0]],
        colors=[[255, 0, 0], [0, 128, 0], [1, 2, 3]],
        frame_id="map",
    )


@pytest.mark.parametrize("binary", [True, False])
def test_when_save_and_load_ply_is_success(tmp_path, cloud, binary):
    path = save_ply(cloud, tmp_path / "cloud.ply", binary=binary)

    loaded = load_ply(path)

    assert np.allclose(loaded.positions, cloud.positions)
    assert np.array_equal(loaded.colors, cloud.colors)
    assert not loaded.colorless


def test_load_ply_without_color_is_colorless(tmp_path):
    path = tmp_path / "plain.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 2 3\n"
    )

    loaded = load_ply(path)

    assert loaded.colorless
    assert loaded.colors.tolist() == [[0, 0, 0], [0, 0, 0]]
    assert loaded.positions[1].tolist() == [1.0, 2.0, 3.0]


def test_save_ply_writes_extra_properties(tmp_path, cloud):
    path = save_ply(
        cloud,
        tmp_path / "labeled.ply",
        binary=False,
        extra={"canopy": np.array([1, 0, 1]), "cluster": np.array([0, -1, 2])},
    )

    text = path.read_text()

    assert "property int canopy" in text
    assert "property int cluster" in text
    assert len(load_ply(path)) == 3


def test_when_load_ply_is_missing():
    with pytest.raises(FileFormatError):
        load_ply("does/not/exist.ply")


def test_when_load_ply_header_is_malformed(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex two\nend_header\n")

    with pytest.raises(PlyParseError):
        load_ply(path)


def test_when_load_ply_binary_body_is_truncated(tmp_path, cloud):
    path = save_ply(cloud, tmp_path / "cloud.ply")
    data = path.read_bytes()
    path.write_bytes(data[:-7])

    with pytest.raises(PlyParseError) as error:
        load_ply(path)

    assert error.value.offset is not None
    assert "Truncated" in error.value.message


def test_when_load_ply_ascii_body_is_truncated(tmp_path, cloud):
    path = save_ply(cloud, tmp_path / "cloud.ply", binary=False)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")

    with pytest.raises(PlyParseError) as error:
        load_ply(path)

    assert error.value.line is not None


def test_when_load_ply_has_integer_positions(tmp_path):
    path = tmp_path / "ints.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property int x\nproperty int y\nproperty int z\n"
        "end_header\n1 2 3\n"
    )

    with pytest.raises(PlyParseError) as error:
        load_ply(path)

    assert "expected float" in error.value.message
