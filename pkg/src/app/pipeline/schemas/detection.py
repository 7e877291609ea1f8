from enum import Enum, IntEnum

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from ..utils.error_handler import CountsValidationError

SCORE_SUM_TOLERANCE = 1e-6


class ClassLabel(IntEnum):
    """Patch and pixel classes; values are the label-map palette indices."""

    BACKGROUND = 0
    LEAVES = 1
    WOOD = 2
    POLE = 3
    BUNCH = 4

    @property
    def title(self) -> str:
        return self.name.lower()


# Column order of scores on the wire and in reports.
SCORE_ORDER = (
    ClassLabel.BUNCH,
    ClassLabel.POLE,
    ClassLabel.WOOD,
    ClassLabel.LEAVES,
    ClassLabel.BACKGROUND,
)


class OverlapRule(str, Enum):
    MEAN = "mean"
    MAX = "max"


class AggregationMode(str, Enum):
    POOLED = "pooled"
    MEAN = "mean"


class PatchGrid(BaseModel):
    """Sliding-window positions with flush-to-edge final positions.

    `lookup` holds, for every patch id, the flat pixel indices of its
    window in raster order, so a gather `image.reshape(-1, C)[lookup]`
    yields every patch at once.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    window: int = Field(..., gt=0)
    stride: int = Field(..., gt=0)
    xs: tuple[int, ...]
    ys: tuple[int, ...]
    lookup: np.ndarray

    @property
    def patch_count(self) -> int:
        return len(self.xs) * len(self.ys)

    def origin(self, patch_id: int) -> tuple[int, int]:
        """(x, y) of the top-left pixel; ids run row-major over ys, xs."""
        row, col = divmod(patch_id, len(self.xs))
        return self.xs[col], self.ys[row]


class ClassScores(BaseModel):
    model_config = ConfigDict(frozen=True)

    bunch: float = Field(..., ge=0, le=1)
    pole: float = Field(..., ge=0, le=1)
    wood: float = Field(..., ge=0, le=1)
    leaves: float = Field(..., ge=0, le=1)
    background: float = Field(..., ge=0, le=1)

    @model_validator(mode="after")
    def _check_sum(self) -> "ClassScores":
        total = sum(self.as_tuple())
        if abs(total - 1.0) > SCORE_SUM_TOLERANCE:
            raise ValueError(f"class scores sum to {total}, expected 1")
        return self

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.bunch, self.pole, self.wood, self.leaves, self.background)

    @property
    def best(self) -> ClassLabel:
        values = self.as_tuple()
        return SCORE_ORDER[values.index(max(values))]

    @classmethod
    def from_sequence(cls, values) -> "ClassScores":
        values = [float(v) for v in values]
        if len(values) != len(SCORE_ORDER):
            raise ValueError(f"expected 5 scores, got {len(values)}")
        return cls(**dict(zip((c.title for c in SCORE_ORDER), values)))


class ProbabilityMaps(BaseModel):
    """Per-pixel class scores, shape (H, W, 5) in `SCORE_ORDER`, plus the
    number of patches that covered each pixel."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scores: np.ndarray
    coverage: np.ndarray

    def channel(self, label: ClassLabel) -> np.ndarray:
        return self.scores[:, :, SCORE_ORDER.index(label)]


class ConfusionCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: ClassLabel
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class ClusterCounts(BaseModel):
    gc: int = Field(..., ge=0)
    t_gc: int = Field(..., ge=0)
    f_gc: int = Field(..., ge=0)
    n_gc: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_totals(self) -> "ClusterCounts":
        if self.t_gc + self.n_gc != self.gc:
            raise CountsValidationError(
                f"T_GC + N_GC = {self.t_gc + self.n_gc} but GC = {self.gc}"
            )
        return self


class PatchMetrics(BaseModel):
    """Per-class patch metrics; None marks an undefined ratio."""

    label: ClassLabel
    acc: float | None
    bacc: float | None
    precision: float | None
    recall: float | None
    tnr: float | None


class ClusterMetrics(BaseModel):
    acc: float | None
    precision: float | None
    recall: float | None


class DetectionBox(BaseModel):
    """Inclusive pixel rectangle (x_min, y_min)-(x_max, y_max)."""

    model_config = ConfigDict(frozen=True)

    x_min: int = Field(..., ge=0)
    y_min: int = Field(..., ge=0)
    x_max: int = Field(..., ge=0)
    y_max: int = Field(..., ge=0)
    area: int = Field(default=0, ge=0)
    scores: ClassScores | None = None

    @model_validator(mode="after")
    def _check_corners(self) -> "DetectionBox":
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("box corners are inverted")
        return self

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1


class DetectionParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    window: int = Field(default=80, gt=0)
    stride: int = Field(default=40, gt=0)
    threshold: float = Field(default=0.85, ge=0, le=1)
    closing_diameter: int = Field(default=5, gt=0)
    min_area: int = Field(default=25, ge=0)
    overlap_rule: OverlapRule = OverlapRule.MEAN
    classifier_input: int | None = Field(default=None, gt=0)

    @field_validator("closing_diameter")
    @classmethod
    def _check_odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("closing diameter must be odd")
        return value


class Detections(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    boxes: list[DetectionBox]
    maps: ProbabilityMaps
    mask: np.ndarray
    patch_scores: list[ClassScores]


class DatasetSplit(BaseModel):
    train: list
    validation: list
    test: list
