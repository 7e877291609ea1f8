from enum import Enum
from typing import Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat

from .geometry import Point3D

GrviValue = Annotated[float, Field(ge=-1.0, le=1.0)]


class HeightComparison(str, Enum):
    BELOW = "below"
    ABOVE = "above"


class SegmentationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    cell_side: PositiveFloat = 0.1
    th_p: float = Field(default=0.7, gt=0, le=1)
    th_h: float = 0.75
    height_comparison: HeightComparison = HeightComparison.BELOW


class CanopyLabeling(BaseModel):
    """Per-point canopy flags aligned with the labeled cloud."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    flags: np.ndarray

    def __len__(self) -> int:
        return len(self.flags)

    @property
    def canopy_indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)


class PlantCluster(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cluster_id: int = Field(..., ge=0)
    indices: np.ndarray
    centroid: Point3D

    @property
    def size(self) -> int:
        return len(self.indices)


class KMeansResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    centroids: np.ndarray
    assignments: np.ndarray
    inertia_history: list[float]
    iterations: int
    converged: bool


class SegmentationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labeling: CanopyLabeling
    clusters: list[PlantCluster]
    grvi: np.ndarray
