import json

import numpy as np
import pytest

from src.app.main import build_parser, main
from src.app.pipeline.utils.error_handler import (
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
)
from src.app.pipeline.utils.formats import read_csv
from src.app.pipeline.utils.ply import load_ply
from src.app.settings.config import config

SMALL_ROW = [
    "--set",
    "synth_plants=3",
    "--set",
    "plant_count=3",
    "--set",
    "synth_density=8000",
    "--set",
    "height_comparison=above",
    "--set",
    "th_h=0.2",
]


@pytest.fixture(autouse=True)
def log_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "LOG_DIR", str(tmp_path / "logs"))


def _run(*argv) -> int:
    return main([str(a) for a in argv])


def _row_outputs(root):
    assert _run("synth", root / "row", *SMALL_ROW) == EXIT_OK
    assert (
        _run(
            "segment",
            root / "row" / "row.ply",
            "--output",
            root / "seg",
            *SMALL_ROW,
        )
        == EXIT_OK
    )
    assert (
        _run(
            "volumes",
            root / "row" / "row.ply",
            "--clusters",
            root / "seg" / "clusters.csv",
            "--manual",
            root / "row" / "manual.csv",
            "--output",
            root / "vol",
            *SMALL_ROW,
        )
        == EXIT_OK
    )
    return [
        root / "row" / "row.ply",
        root / "seg" / "labeled.ply",
        root / "seg" / "clusters.csv",
        root / "seg" / "centroids.json",
        root / "vol" / "plants.csv",
        root / "vol" / "volume_summary.json",
    ]


def test_row_commands_are_deterministic(tmp_path):
    first = _row_outputs(tmp_path / "a")
    second = _row_outputs(tmp_path / "b")

    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes(), a.name


def test_volumes_report_every_plant(tmp_path):
    _row_outputs(tmp_path)

    plants = read_csv(tmp_path / "vol" / "plants.csv")
    summary_path = tmp_path / "vol" / "volume_summary.json"
    summary = json.loads(summary_path.read_text())

    assert [row["plant_id"] for row in plants] == ["0", "1", "2"]
    for row in plants:
        assert float(row["ch"]) <= float(row["obb"]) <= float(row["aabb"])
        assert 0.6 <= float(row["height"]) <= 0.8
    assert summary["plant_count"] == 3


def test_stereo_chain_from_frames_to_volumes(tmp_path):
    frames = tmp_path / "synth" / "frames"
    assert (
        _run("synth", tmp_path / "synth", "--kind", "frames", *SMALL_ROW)
        == EXIT_OK
    )
    assert (
        _run(
            "reconstruct", frames, "--output", tmp_path / "clouds", "--jobs", 2
        )
        == EXIT_OK
    )
    assert (
        _run(
            "map",
            tmp_path / "clouds",
            "--trajectory",
            tmp_path / "synth" / "trajectory.txt",
            "--output",
            tmp_path / "row.ply",
        )
        == EXIT_OK
    )
    assert (
        _run(
            "segment",
            tmp_path / "row.ply",
            "--output",
            tmp_path / "seg",
            *SMALL_ROW,
        )
        == EXIT_OK
    )
    assert (
        _run(
            "volumes",
            tmp_path / "row.ply",
            "--clusters",
            tmp_path / "seg" / "clusters.csv",
            "--output",
            tmp_path / "vol",
        )
        == EXIT_OK
    )

    stats = json.loads((tmp_path / "row.json").read_text())
    assert stats["frame_count"] == 6
    row = load_ply(tmp_path / "row.ply")
    assert stats["points"] == len(row)
    # points stay in front of the camera track
    assert np.all(row.positions[:, 0] >= -1.0 - 1e-9)
    assert len(read_csv(tmp_path / "vol" / "plants.csv")) == 3


def test_detect_and_eval(tmp_path):
    images = tmp_path / "images"
    settings = ["--set", "synth_images=2", "--set", "synth_max_bunches=8"]
    assert _run("synth", images, "--kind", "images", *settings) == EXIT_OK
    assert (
        _run("detect", images, "--output", tmp_path / "det", "--draw")
        == EXIT_OK
    )
    assert (
        _run(
            "eval",
            "--detections",
            tmp_path / "det" / "detections.json",
            "--truth",
            images,
            "--output",
            tmp_path / "report.json",
        )
        == EXIT_OK
    )

    report = json.loads((tmp_path / "report.json").read_text())
    truth = json.loads((images / "truth.json").read_text())
    assert (tmp_path / "det" / "image_000_boxes.png").is_file()
    assert report["cluster_counts"]["GC"] == sum(t["bunches"] for t in truth)
    assert report["cluster_metrics"]["pooled"]["ACC_GC"] >= 0.8
    assert set(report["patch_metrics"]) == {
        "bunch",
        "pole",
        "wood",
        "leaves",
        "background",
    }


def test_eval_from_counts(tmp_path):
    counts = tmp_path / "counts.json"
    counts.write_text(
        json.dumps(
            {
                "total": 100,
                "classes": [
                    {"label": "bunch", "tp": 9, "fp": 1, "tn": 89, "fn": 1}
                ],
                "images": [{"gc": 4, "t_gc": 3, "f_gc": 1, "n_gc": 1}],
            }
        )
    )

    output = tmp_path / "r.json"

    assert _run("eval", "--counts", counts, "--output", output) == EXIT_OK

    report = json.loads(output.read_text())
    assert report["patch_metrics"]["bunch"]["ACC"] == pytest.approx(0.98)
    assert report["cluster_metrics"]["pooled"]["P_GC"] == pytest.approx(0.75)


def test_eval_rejects_class_totals_that_disagree(tmp_path):
    counts = tmp_path / "counts.json"
    counts.write_text(
        json.dumps(
            {
                "classes": [
                    {"label": "bunch", "tp": 9, "fp": 1, "tn": 89, "fn": 1},
                    {"label": "pole", "tp": 2, "fp": 0, "tn": 96, "fn": 1},
                ]
            }
        )
    )
    output = tmp_path / "r.json"

    assert (
        _run("eval", "--counts", counts, "--output", output)
        == EXIT_VALIDATION
    )
    assert not output.exists()


@pytest.mark.parametrize(
    "argv, code",
    [
        (["synth", "{tmp}/out", "--set", "colour=red"], EXIT_VALIDATION),
        (["synth", "{tmp}/out", "--jobs", "0"], EXIT_VALIDATION),
        (["eval", "--output", "{tmp}/r.json"], EXIT_VALIDATION),
        (["segment", "{tmp}/bad.ply", "--output", "{tmp}/seg"], EXIT_IO),
        (["segment", "{tmp}/absent.ply", "--output", "{tmp}/seg"], EXIT_IO),
    ],
)
def test_failures_map_to_exit_codes(tmp_path, argv, code):
    (tmp_path / "bad.ply").write_text("ply\nformat ascii 1.0\nelement v\n")

    assert main([a.format(tmp=tmp_path) for a in argv]) == code


def test_help_lists_configuration_keys(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["segment", "--help"])

    out = capsys.readouterr().out
    assert "configuration keys and defaults" in out
    assert "th_h = 0.75" in out
