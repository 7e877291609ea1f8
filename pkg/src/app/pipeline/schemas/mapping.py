from enum import Enum
from typing import Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    model_validator,
)

from .geometry import ColoredPointCloud, RigidTransform


class FramePose(BaseModel):
    """Pose mapping frame coordinates into the map frame."""

    model_config = ConfigDict(frozen=True)

    frame_index: int = Field(..., ge=0)
    pose: RigidTransform


class RowMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    cloud: ColoredPointCloud
    frame_count: int = Field(..., ge=1)
    merge_cell: PositiveFloat


class OutlierStage(str, Enum):
    FRAME = "frame"
    MAP = "map"


class ReconstructionParams(BaseModel):
    """Point selection applied to every triangulated frame."""

    model_config = ConfigDict(frozen=True)

    outlier_k: int = Field(default=50, ge=1)
    outlier_std_ratio: float = Field(default=1.0, gt=0)
    outlier_stage: OutlierStage = OutlierStage.FRAME
    lateral_min: float = 0.5
    lateral_max: float = 3.0
    lateral_axis: Literal["x", "y", "z"] = "x"

    @model_validator(mode="after")
    def _check_band(self) -> "ReconstructionParams":
        if self.lateral_min >= self.lateral_max:
            raise ValueError("lateral_min must be below lateral_max")
        return self


class FrameReconstruction(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_index: int
    cloud: ColoredPointCloud
    triangulated: int = Field(..., ge=0)
    invalid_fraction: float = Field(..., ge=0, le=1)
