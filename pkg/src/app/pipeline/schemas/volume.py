from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .geometry import DescriptiveStats, Point3D


class VolumeMethod(str, Enum):
    OG = "OG"
    CH = "CH"
    OBB = "OBB"
    AABB = "AABB"
    MANUAL = "MANUAL"


class VolumeEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: VolumeMethod
    value: float = Field(..., ge=0)
    params: dict[str, float] = Field(default_factory=dict)
    degenerate: bool = False


class OrientedBox(BaseModel):
    """Box with center, orthonormal axes (rows of `axes`) and half
    extents along them."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    center: Point3D
    axes: np.ndarray
    half_extents: np.ndarray

    @field_validator("axes", mode="before")
    @classmethod
    def _check_axes(cls, value) -> np.ndarray:
        axes = np.asarray(value, dtype=np.float64)
        if axes.shape != (3, 3) or not np.allclose(
            axes @ axes.T, np.eye(3), atol=1e-9
        ):
            raise ValueError("axes must be three orthonormal vectors")
        return axes

    @field_validator("half_extents", mode="before")
    @classmethod
    def _check_half_extents(cls, value) -> np.ndarray:
        half = np.asarray(value, dtype=np.float64).reshape(3)
        if np.any(half < 0):
            raise ValueError("half extents must be non-negative")
        return half

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_extents))


def og_key(delta: float) -> str:
    """Report column of an occupancy-grid estimate, e.g. 0.05 -> og_005."""
    return f"og_{int(round(delta * 100)):03d}"


class PlantReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    plant_id: int
    n_points: int = Field(..., ge=0)
    og: dict[str, float]
    ch: float = Field(..., ge=0)
    obb: float = Field(..., ge=0)
    aabb: float = Field(..., ge=0)
    height: float = Field(..., ge=0)
    degenerate: bool = False

    def values(self) -> dict[str, float]:
        return {
            **self.og,
            "ch": self.ch,
            "obb": self.obb,
            "aabb": self.aabb,
            "height": self.height,
        }


class ManualMeasurement(BaseModel):
    model_config = ConfigDict(frozen=True)

    plant_id: int
    depth: float = Field(..., gt=0)
    height: float = Field(..., gt=0)
    width: float = Field(default=0.9, gt=0)


class VolumeSummary(BaseModel):
    """Descriptive statistics per method, laid out like a methods-by-
    statistics table."""

    model_config = ConfigDict(frozen=True)

    plant_count: int
    methods: dict[str, DescriptiveStats]
    height: DescriptiveStats
    manual: DescriptiveStats | None = None
    discrepancy_vs_manual: dict[str, float] = Field(default_factory=dict)
    degenerate_plants: list[int] = Field(default_factory=list)
