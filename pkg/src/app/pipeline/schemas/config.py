import math
from typing import Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    field_validator,
    model_validator,
)

from .detection import (
    AggregationMode,
    ClassLabel,
    DetectionParams,
    OverlapRule,
)
from .mapping import OutlierStage, ReconstructionParams
from .segmentation import HeightComparison, SegmentationParams
from .stereo import DisparityRange, StereoParams
from .synth import AnnotatedSceneSpec, CameraRig, SyntheticRowSpec


def _split_numbers(value):
    if isinstance(value, str):
        return [item for item in value.replace(",", " ").split() if item]
    return value


class PipelineConfig(BaseModel):
    """Every tunable of the pipeline, one flat key per parameter.

    Keys match the `key=value` lines of a config file and `--set`
    overrides; unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    # stereo
    d_min: int = Field(default=8, ge=0)
    d_max: int = Field(default=40, gt=0)
    census_window: int = 5
    p1: float = Field(default=10.0, gt=0)
    p2: float = Field(default=120.0, gt=0)
    subpixel: bool = True
    lr_check: bool = True
    lr_threshold: float = Field(default=1.0, ge=0)
    uniqueness: bool = True
    uniqueness_ratio: float = Field(default=0.95, gt=0, le=1)

    # point selection and mapping
    outlier_k: int = Field(default=50, ge=1)
    outlier_std_ratio: PositiveFloat = 1.0
    outlier_stage: OutlierStage = OutlierStage.FRAME
    lateral_min: float = 0.5
    lateral_max: float = 3.0
    lateral_axis: Literal["x", "y", "z"] = "x"
    merge_cell: PositiveFloat = 0.01

    # canopy segmentation
    cell_side: PositiveFloat = 0.1
    th_p: float = Field(default=0.7, gt=0, le=1)
    th_h: float = 0.75
    height_comparison: HeightComparison = HeightComparison.BELOW
    ground_height: float = 0.0
    plant_count: int = Field(default=54, ge=1)
    plant_spacing: PositiveFloat = 0.9
    row_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    kmeans_max_iterations: int = Field(default=100, ge=1)
    centre_comb: bool = False

    # volume
    og_deltas: tuple[PositiveFloat, ...] = (0.05, 0.1)
    manual_width: PositiveFloat = 0.9

    # bunch detection
    window: int = Field(default=80, gt=0)
    stride: int = Field(default=40, gt=0)
    threshold: float = Field(default=0.85, ge=0, le=1)
    closing_diameter: int = Field(default=5, gt=0)
    min_area: int = Field(default=25, ge=0)
    overlap_rule: OverlapRule = OverlapRule.MEAN
    label_threshold_bunch: float = Field(default=0.2, ge=0, le=1)
    label_threshold_pole: float = Field(default=0.2, ge=0, le=1)
    label_threshold_wood: float = Field(default=0.2, ge=0, le=1)
    classifier: Literal["heuristic", "process", "tcp"] = "heuristic"
    classifier_endpoint: str = ""
    classifier_timeout: PositiveFloat = 10.0
    classifier_input: int | None = Field(default=None, gt=0)
    iou_threshold: float | None = Field(default=None, gt=0, le=1)
    aggregation: AggregationMode = AggregationMode.POOLED

    # synthetic data
    seed: int = Field(default=0, ge=0)
    synth_plants: int = Field(default=54, ge=1)
    synth_density: PositiveFloat = 30000.0
    synth_images: int = Field(default=10, ge=1)
    synth_min_bunches: int = Field(default=5, ge=0)
    synth_max_bunches: int = Field(default=20, ge=0)
    frame_width: int = Field(default=160, ge=16)
    frame_height: int = Field(default=120, ge=16)
    horizontal_fov_deg: float = Field(default=60.0, gt=0, lt=180)
    baseline: PositiveFloat = 0.2
    lateral_distance: PositiveFloat = 1.5
    mount_height: float = 1.0
    frame_step: PositiveFloat = 0.5

    @field_validator("row_axis", "og_deltas", mode="before")
    @classmethod
    def _parse_lists(cls, value):
        return _split_numbers(value)

    @field_validator("classifier_input", "iou_threshold", mode="before")
    @classmethod
    def _blank_is_none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @field_validator("census_window")
    @classmethod
    def _check_census_window(cls, value: int) -> int:
        if value not in (3, 5, 7):
            raise ValueError("census window must be 3, 5 or 7")
        return value

    @field_validator("closing_diameter")
    @classmethod
    def _check_odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("closing diameter must be odd")
        return value

    @field_validator("og_deltas")
    @classmethod
    def _check_deltas(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("at least one occupancy grid size is required")
        return value

    @model_validator(mode="after")
    def _check_ranges(self) -> "PipelineConfig":
        problems = []
        if not self.d_min < self.d_max:
            problems.append("d_min must be below d_max")
        both_off = math.isinf(self.p1) and math.isinf(self.p2)
        if not both_off and not self.p1 < self.p2:
            problems.append("p1 must be below p2")
        if not self.lateral_min < self.lateral_max:
            problems.append("lateral_min must be below lateral_max")
        if self.synth_min_bunches > self.synth_max_bunches:
            problems.append("synth_min_bunches exceeds synth_max_bunches")
        if not any(self.row_axis):
            problems.append("row_axis must not be null")
        if self.classifier != "heuristic" and not self.classifier_endpoint:
            problems.append(
                f"classifier `{self.classifier}` needs an endpoint"
            )
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def stereo_params(self) -> StereoParams:
        return StereoParams(
            disparity_range=DisparityRange(d_min=self.d_min, d_max=self.d_max),
            census_window=self.census_window,
            p1=self.p1,
            p2=self.p2,
            subpixel=self.subpixel,
            lr_check=self.lr_check,
            lr_threshold=self.lr_threshold,
            uniqueness=self.uniqueness,
            uniqueness_ratio=self.uniqueness_ratio,
        )

    def reconstruction_params(self) -> ReconstructionParams:
        return ReconstructionParams(
            outlier_k=self.outlier_k,
            outlier_std_ratio=self.outlier_std_ratio,
            outlier_stage=self.outlier_stage,
            lateral_min=self.lateral_min,
            lateral_max=self.lateral_max,
            lateral_axis=self.lateral_axis,
        )

    def segmentation_params(self) -> SegmentationParams:
        return SegmentationParams(
            cell_side=self.cell_side,
            th_p=self.th_p,
            th_h=self.th_h,
            height_comparison=self.height_comparison,
        )

    def detection_params(self) -> DetectionParams:
        return DetectionParams(
            window=self.window,
            stride=self.stride,
            threshold=self.threshold,
            closing_diameter=self.closing_diameter,
            min_area=self.min_area,
            overlap_rule=self.overlap_rule,
            classifier_input=self.classifier_input,
        )

    def label_thresholds(self) -> dict[ClassLabel, float]:
        return {
            ClassLabel.BUNCH: self.label_threshold_bunch,
            ClassLabel.POLE: self.label_threshold_pole,
            ClassLabel.WOOD: self.label_threshold_wood,
        }

    def row_spec(self) -> SyntheticRowSpec:
        return SyntheticRowSpec(
            plant_count=self.synth_plants,
            spacing=self.plant_spacing,
            density=self.synth_density,
            seed=self.seed,
        )

    def camera_rig(self) -> CameraRig:
        return CameraRig(
            width=self.frame_width,
            height=self.frame_height,
            horizontal_fov_deg=self.horizontal_fov_deg,
            baseline=self.baseline,
            lateral_distance=self.lateral_distance,
            mount_height=self.mount_height,
            frame_step=self.frame_step,
            disparity_range=DisparityRange(d_min=self.d_min, d_max=self.d_max),
        )

    def scene_spec(self, bunch_count: int, seed: int) -> AnnotatedSceneSpec:
        return AnnotatedSceneSpec(bunch_count=bunch_count, seed=seed)
