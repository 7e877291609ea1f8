import math
from enum import IntEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat

from .geometry import ColoredPointCloud, RigidTransform
from .mapping import FramePose
from .stereo import DisparityRange, RectifiedStereoPair, StereoCalibration

# Camera looking along +x of the vehicle: camera z -> vehicle x,
# camera x -> vehicle -y, camera y -> vehicle -z.
RIGHT_LOOKING = np.array(
    [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
)


class SceneLabel(IntEnum):
    GROUND = 0
    CANOPY = 1
    TRUNK = 2


class SyntheticRowSpec(BaseModel):
    """A straight row of ellipsoidal plants along the map y axis.

    `semi_axes` are given in map axes: lateral (x), along the row (y),
    vertical (z). Densities are points per cubic meter for plants and
    trunks and points per square meter for the ground strip.
    """

    model_config = ConfigDict(frozen=True)

    plant_count: int = Field(default=54, ge=1)
    spacing: PositiveFloat = 0.9
    semi_axes: tuple[PositiveFloat, PositiveFloat, PositiveFloat] = (
        0.3,
        0.35,
        0.35,
    )
    row_x: float = 0.0
    trunk_height: PositiveFloat = 0.5
    canopy_gap: float = Field(default=0.15, ge=0)
    trunk_radius: PositiveFloat = 0.04
    ground_width: float = Field(default=1.2, ge=0)
    density: PositiveFloat = 30000.0
    ground_density: float = Field(default=2000.0, ge=0)
    noise_sigma: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0)

    def canopy_center(self, plant: int) -> np.ndarray:
        return np.array(
            [
                self.row_x,
                plant * self.spacing,
                self.trunk_height + self.canopy_gap + self.semi_axes[2],
            ]
        )

    @property
    def plant_volume(self) -> float:
        a, b, c = self.semi_axes
        return 4.0 / 3.0 * math.pi * a * b * c

    @property
    def row_length(self) -> float:
        return self.plant_count * self.spacing


class GroundTruthBundle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cloud: ColoredPointCloud
    labels: np.ndarray
    assignments: np.ndarray
    plant_centers: np.ndarray
    plant_volumes: list[float]
    plant_heights: list[float]

    @property
    def canopy_mask(self) -> np.ndarray:
        return self.labels == SceneLabel.CANOPY


class StereoTruth(BaseModel):
    """Left-image disparity with the pixels hidden from the right camera
    (`occluded`) and those whose match falls outside it (`out_of_view`)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    disparity: np.ndarray
    occluded: np.ndarray
    out_of_view: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return ~(self.occluded | self.out_of_view)


class CameraRig(BaseModel):
    """Stereo head mounted on a vehicle driving along the row."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(default=160, ge=16)
    height: int = Field(default=120, ge=16)
    horizontal_fov_deg: float = Field(default=60.0, gt=0, lt=180)
    baseline: PositiveFloat = 0.2
    lateral_distance: PositiveFloat = 1.5
    mount_height: float = 1.0
    frame_step: PositiveFloat = 0.5
    disparity_range: DisparityRange = DisparityRange()

    def calibration(self) -> StereoCalibration:
        calib = StereoCalibration.from_field_of_view(
            self.width, self.height, self.horizontal_fov_deg, self.baseline
        )
        return calib.model_copy(
            update={
                "camera_to_vehicle": RigidTransform(
                    rotation=RIGHT_LOOKING,
                    translation=[0.0, 0.0, self.mount_height],
                )
            }
        )

    def poses(self, spec: SyntheticRowSpec) -> list[FramePose]:
        """Vehicle poses every `frame_step` meters along the row."""
        start = -spec.spacing / 2.0
        count = int(math.floor(spec.row_length / self.frame_step)) + 1
        return [
            FramePose(
                frame_index=i,
                pose=RigidTransform(
                    rotation=np.eye(3),
                    translation=[
                        spec.row_x - self.lateral_distance,
                        start + i * self.frame_step,
                        0.0,
                    ],
                ),
            )
            for i in range(count)
        ]


class SyntheticFrame(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frame_index: int
    pair: RectifiedStereoPair
    color: np.ndarray
    truth: StereoTruth


class AnnotatedSceneSpec(BaseModel):
    """Vineyard image layout: bunches on a jittered grid of square cells
    over a leaf field, wood strips and a pole along cell borders."""

    model_config = ConfigDict(frozen=True)

    bunch_count: int = Field(default=10, ge=0)
    columns: int = Field(default=5, ge=1)
    cell: int = Field(default=200, ge=120)
    jitter: int = Field(default=20, ge=0)
    semi_axes_x: tuple[int, int] = (20, 28)
    semi_axes_y: tuple[int, int] = (28, 38)
    wood_strips: bool = True
    pole: bool = True
    background_blocks: int = Field(default=2, ge=0)
    noise: int = Field(default=15, ge=0, le=40)
    seed: int = Field(default=0, ge=0)
    bunch_centers: list[tuple[int, int]] | None = None


class AnnotatedImage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    image: np.ndarray
    labels: np.ndarray
    regions: list[np.ndarray]
