from typing import Annotated, Sequence

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FiniteFloat,
    field_validator,
    model_validator,
)

ColorChannel = Annotated[int, Field(ge=0, le=255)]

ORTHONORMAL_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


class Point3D(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: FiniteFloat
    y: FiniteFloat
    z: FiniteFloat

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Point3D":
        return cls(x=float(values[0]), y=float(values[1]), z=float(values[2]))


class ColoredPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Point3D
    color: tuple[ColorChannel, ColorChannel, ColorChannel] = (0, 0, 0)


class ColoredPointCloud(BaseModel):
    """Ordered colored points stored column-wise.

    `positions` is an (N, 3) float64 array in meters and `colors` an (N, 3)
    uint8 array; both are read-only once the cloud exists.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    positions: np.ndarray
    colors: np.ndarray
    frame_id: str = "camera"
    colorless: bool = False

    @field_validator("positions", mode="before")
    @classmethod
    def _check_positions(cls, value) -> np.ndarray:
        positions = np.asarray(value, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(positions)):
            raise ValueError("point coordinates must be finite")
        return _frozen(positions)

    @field_validator("colors", mode="before")
    @classmethod
    def _check_colors(cls, value) -> np.ndarray:
        colors = np.asarray(value)
        if colors.size and (colors.min() < 0 or colors.max() > 255):
            raise ValueError("color channels must lie in [0, 255]")
        return _frozen(colors.astype(np.uint8).reshape(-1, 3))

    @model_validator(mode="after")
    def _check_lengths(self) -> "ColoredPointCloud":
        if len(self.positions) != len(self.colors):
            raise ValueError(
                f"{len(self.positions)} positions but "
                f"{len(self.colors)} colors"
            )
        return self

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def is_empty(self) -> bool:
        return len(self.positions) == 0

    def point(self, index: int) -> ColoredPoint:
        r, g, b = (int(c) for c in self.colors[index])
        return ColoredPoint(
            position=Point3D.from_array(self.positions[index]),
            color=(r, g, b),
        )

    def subset(self, selector) -> "ColoredPointCloud":
        """Points picked by a boolean mask or an index array."""
        return ColoredPointCloud(
            positions=self.positions[selector],
            colors=self.colors[selector],
            frame_id=self.frame_id,
            colorless=self.colorless,
        )

    def with_positions(
        self, positions: np.ndarray, frame_id: str | None = None
    ) -> "ColoredPointCloud":
        """Same colors, new positions, optionally relabeled."""
        return ColoredPointCloud(
            positions=positions,
            colors=self.colors,
            frame_id=frame_id or self.frame_id,
            colorless=self.colorless,
        )

    @classmethod
    def empty(cls, frame_id: str = "camera") -> "ColoredPointCloud":
        return cls(
            positions=np.empty((0, 3)),
            colors=np.empty((0, 3), dtype=np.uint8),
            frame_id=frame_id,
        )


class RigidTransform(BaseModel):
    """Rotation followed by translation: p -> R @ p + t."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rotation: np.ndarray
    translation: np.ndarray

    @field_validator("rotation", mode="before")
    @classmethod
    def _check_rotation(cls, value) -> np.ndarray:
        rotation = np.asarray(value, dtype=np.float64)
        if rotation.shape != (3, 3) or not np.all(np.isfinite(rotation)):
            raise ValueError("rotation must be a finite 3x3 matrix")
        return _frozen(rotation)

    @field_validator("translation", mode="before")
    @classmethod
    def _check_translation(cls, value) -> np.ndarray:
        translation = np.asarray(value, dtype=np.float64).reshape(-1)
        if translation.shape != (3,) or not np.all(np.isfinite(translation)):
            raise ValueError("translation must be a finite 3-vector")
        return _frozen(translation)

    def is_orthonormal(self, tolerance: float = ORTHONORMAL_TOLERANCE) -> bool:
        r = self.rotation
        return bool(
            np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=tolerance)
            and abs(np.linalg.det(r) - 1.0) <= tolerance
        )

    def apply(self, positions: np.ndarray) -> np.ndarray:
        return positions @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """The transform applying `other` first, then `self`."""
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rotation_t = self.rotation.T
        return RigidTransform(
            rotation=rotation_t, translation=-rotation_t @ self.translation
        )

    def as_matrix(self) -> np.ndarray:
        """3x4 [R | t] matrix."""
        return np.hstack([self.rotation, self.translation[:, None]])

    @classmethod
    def from_matrix(cls, matrix: Sequence[float]) -> "RigidTransform":
        """Builds a transform from 12 row-major numbers, a 3x4 or a 4x4
        matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.size == 16:
            m = m.reshape(4, 4)[:3]
        m = m.reshape(3, 4)
        return cls(rotation=m[:, :3], translation=m[:, 3])

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(rotation=np.eye(3), translation=np.zeros(3))


class AxisAlignedBox(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_corner: Point3D
    max_corner: Point3D

    @model_validator(mode="after")
    def _check_order(self) -> "AxisAlignedBox":
        if np.any(self.min_corner.as_array() > self.max_corner.as_array()):
            raise ValueError("min_corner must not exceed max_corner")
        return self

    @property
    def extents(self) -> np.ndarray:
        return self.max_corner.as_array() - self.min_corner.as_array()

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def contains(self, positions: np.ndarray) -> np.ndarray:
        """Closed-interval membership mask for an (N, 3) array."""
        low, high = self.min_corner.as_array(), self.max_corner.as_array()
        return np.all((positions >= low) & (positions <= high), axis=1)

    @classmethod
    def from_arrays(cls, low, high) -> "AxisAlignedBox":
        return cls(
            min_corner=Point3D.from_array(low),
            max_corner=Point3D.from_array(high),
        )


class DescriptiveStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    std_dev: float = Field(..., ge=0)
    min: float
    max: float
    count: int = Field(..., ge=1)
