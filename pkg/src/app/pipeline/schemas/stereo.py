import math

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    field_validator,
    model_validator,
)

from .geometry import RigidTransform

INVALID = np.nan


class RectifiedStereoPair(BaseModel):
    """Row-aligned 8-bit grayscale left/right images of equal size."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    left: np.ndarray
    right: np.ndarray

    @field_validator("left", "right", mode="before")
    @classmethod
    def _check_image(cls, value) -> np.ndarray:
        image = np.asarray(value)
        if image.ndim != 2:
            raise ValueError("stereo images must be 2-D grayscale")
        return image.astype(np.uint8)

    @model_validator(mode="after")
    def _check_sizes(self) -> "RectifiedStereoPair":
        if self.left.shape != self.right.shape:
            raise ValueError(
                f"left {self.left.shape} and right {self.right.shape} "
                "images differ in size"
            )
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape  # type: ignore[return-value]


class ColorCamera(BaseModel):
    model_config = ConfigDict(frozen=True)

    fx: PositiveFloat
    fy: PositiveFloat
    cx: float
    cy: float
    width: int | None = Field(default=None, gt=0)
    height: int | None = Field(default=None, gt=0)


class StereoCalibration(BaseModel):
    """Reference (left) camera intrinsics, baseline and the registration
    that maps reference-camera points into the color camera."""

    model_config = ConfigDict(frozen=True)

    focal_length: PositiveFloat
    baseline: PositiveFloat
    cx: float
    cy: float
    color_registration: RigidTransform = Field(
        default_factory=RigidTransform.identity
    )
    color_camera: ColorCamera | None = None
    camera_to_vehicle: RigidTransform = Field(
        default_factory=RigidTransform.identity
    )

    @property
    def color(self) -> ColorCamera:
        if self.color_camera is not None:
            return self.color_camera
        return ColorCamera(
            fx=self.focal_length,
            fy=self.focal_length,
            cx=self.cx,
            cy=self.cy,
        )

    @classmethod
    def from_field_of_view(
        cls,
        width: int,
        height: int,
        horizontal_fov_deg: float,
        baseline: float,
    ) -> "StereoCalibration":
        focal = (width / 2.0) / math.tan(math.radians(horizontal_fov_deg) / 2)
        return cls(
            focal_length=focal,
            baseline=baseline,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
        )


class DisparityRange(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_min: int = Field(default=8, ge=0)
    d_max: int = Field(default=40, gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "DisparityRange":
        if not self.d_min < self.d_max:
            raise ValueError(
                f"d_min ({self.d_min}) must be below d_max ({self.d_max})"
            )
        return self

    @property
    def count(self) -> int:
        return self.d_max - self.d_min + 1

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.d_min, self.d_max + 1)


class CensusImage(BaseModel):
    """Per-pixel census descriptors packed into uint64 words; `valid` is
    False on the border where the window leaves the image."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    descriptors: np.ndarray
    valid: np.ndarray
    window: int
    n_bits: int

    def bits(self, row: int, col: int) -> tuple[int, ...]:
        word = int(self.descriptors[row, col])
        return tuple(
            (word >> (self.n_bits - 1 - i)) & 1 for i in range(self.n_bits)
        )


class CostVolume(BaseModel):
    """Hamming costs of shape (height, width, disparities); index k along
    the last axis stands for disparity `d_min + k`."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    costs: np.ndarray
    disparity_range: DisparityRange
    n_bits: int
    left_valid: np.ndarray
    right_valid: np.ndarray

    @property
    def max_cost(self) -> int:
        return self.n_bits


class DisparityMap(BaseModel):
    """Per-pixel disparity in pixels; NaN marks INVALID pixels."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    disparity_range: DisparityRange

    @field_validator("values", mode="before")
    @classmethod
    def _as_float(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_range(self) -> "DisparityMap":
        valid = self.values[np.isfinite(self.values)]
        r = self.disparity_range
        if valid.size and (valid.min() < r.d_min or valid.max() > r.d_max):
            raise ValueError("valid disparities must lie in the range")
        return self

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    @classmethod
    def invalid(
        cls, height: int, width: int, disparity_range: DisparityRange
    ) -> "DisparityMap":
        return cls(
            values=np.full((height, width), INVALID),
            disparity_range=disparity_range,
        )


class StereoParams(BaseModel):
    """Matching parameters; +inf for both penalties disables aggregation."""

    model_config = ConfigDict(frozen=True)

    disparity_range: DisparityRange = Field(default_factory=DisparityRange)
    census_window: int = 5
    p1: float = Field(default=10.0, gt=0)
    p2: float = Field(default=120.0, gt=0)
    subpixel: bool = True
    lr_check: bool = True
    lr_threshold: float = Field(default=1.0, ge=0)
    uniqueness: bool = True
    uniqueness_ratio: float = Field(default=0.95, gt=0, le=1)
