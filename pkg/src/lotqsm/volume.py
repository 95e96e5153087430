"""3D voxel grids, masks and the morphology helpers shared by every module.

Arrays are indexed ``data[ix, iy, iz]``. When a volume is flattened
(serialisation, hashing) the canonical order is x fastest, then y, then z,
which is numpy's Fortran order and the NIfTI on-disk order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from lotqsm.errors import DomainError, StructuralError

Dims = tuple[int, int, int]
Spacing = tuple[float, float, float]


class Unit(str, enum.Enum):
    PPM = "ppm"
    RADIANS = "radians"
    HERTZ = "hertz"
    DIMENSIONLESS = "dimensionless"
    RAD_PER_TESLA_SECOND = "rad_per_tesla_second"


def _check_spacing(spacing) -> Spacing:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
        raise DomainError(f"spacing must be three positive numbers, got {spacing}")
    return spacing


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """Real-valued 3D grid with voxel spacing (mm) and a physical unit.

    The array is copied on construction and made read-only, so a volume
    never changes after it is built.
    """

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    unit: Unit = Unit.DIMENSIONLESS

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise StructuralError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        if np.iscomplexobj(arr):
            raise StructuralError("ScalarVolume holds real data; use ComplexVolume")
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise DomainError("volume contains NaN or Inf values")
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "unit", Unit(self.unit))

    @property
    def dims(self) -> Dims:
        return tuple(int(n) for n in self.data.shape)

    @property
    def isotropic(self) -> bool:
        return len(set(self.spacing)) == 1

    def like(self, data, unit: Unit | None = None) -> ScalarVolume:
        """New volume on the same grid (spacing kept, unit optionally replaced)."""
        return ScalarVolume(data, self.spacing, self.unit if unit is None else unit)

    def flat(self) -> np.ndarray:
        return self.data.ravel(order="F")

    def equals(self, other: ScalarVolume) -> bool:
        return (
            self.spacing == other.spacing
            and self.unit == other.unit
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class ComplexVolume:
    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise StructuralError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        arr = arr.astype(np.complex128 if arr.dtype != np.complex64 else np.complex64)
        if not np.all(np.isfinite(arr)):
            raise DomainError("volume contains NaN or Inf values")
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return tuple(int(n) for n in self.data.shape)

    @classmethod
    def from_polar(cls, magnitude: ScalarVolume, phase: ScalarVolume) -> ComplexVolume:
        if magnitude.dims != phase.dims:
            raise StructuralError(f"magnitude {magnitude.dims} and phase {phase.dims} differ in dims")
        return cls(magnitude.data * np.exp(1j * phase.data), magnitude.spacing)

    def magnitude(self) -> ScalarVolume:
        return ScalarVolume(np.abs(self.data), self.spacing, Unit.DIMENSIONLESS)

    def phase(self) -> ScalarVolume:
        # np.angle returns [-pi, pi]; fold -pi onto +pi for the (-pi, pi] convention
        ang = np.angle(self.data)
        ang = np.where(ang <= -np.pi, np.pi, ang)
        return ScalarVolume(ang, self.spacing, Unit.RADIANS)


@dataclass(frozen=True, eq=False)
class Mask:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise StructuralError(f"mask must be a non-empty 3D array, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr.astype(bool)))

    @property
    def dims(self) -> Dims:
        return tuple(int(n) for n in self.data.shape)

    @property
    def count(self) -> int:
        return int(self.data.sum())

    @classmethod
    def full(cls, dims) -> Mask:
        return cls(np.ones(dims, dtype=bool))

    def check_dims(self, dims) -> None:
        if self.dims != tuple(dims):
            raise StructuralError(f"mask dims {self.dims} do not match volume dims {tuple(dims)}")


def ball(radius: float) -> np.ndarray:
    """Boolean Euclidean ball: offsets whose centre distance is <= radius."""
    r = int(np.floor(radius))
    ax = np.arange(-r, r + 1)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    return x**2 + y**2 + z**2 <= radius**2 + 1e-9


def erode(mask: Mask, radius: int) -> Mask:
    """Erode with a Euclidean ball; voxels outside the grid count as background."""
    if radius < 0:
        raise DomainError(f"erosion radius must be >= 0, got {radius}")
    if radius == 0:
        return Mask(mask.data)
    out = ndimage.binary_erosion(mask.data, structure=ball(radius), border_value=0)
    return Mask(out)


def roi_stats(vol: ScalarVolume, roi: Mask) -> tuple[float, float, int]:
    """Mean, population standard deviation and voxel count inside ``roi``."""
    roi.check_dims(vol.dims)
    values = vol.data[roi.data]
    if values.size == 0:
        raise DomainError("ROI is empty")
    return float(values.mean(dtype=np.float64)), float(values.std(dtype=np.float64)), int(values.size)


def resample_index(n_old: int, n_new: int) -> np.ndarray:
    """Nearest source index for each target voxel centre."""
    idx = np.floor((np.arange(n_new) + 0.5) * n_old / n_new).astype(int)
    return np.clip(idx, 0, n_old - 1)


def resample_array(data: np.ndarray, new_dims) -> np.ndarray:
    new_dims = tuple(int(n) for n in new_dims)
    if len(new_dims) != 3 or min(new_dims) < 1:
        raise DomainError(f"new dims must be three positive integers, got {new_dims}")
    ix, iy, iz = (resample_index(o, n) for o, n in zip(data.shape, new_dims))
    return data[np.ix_(ix, iy, iz)]


def resample_nearest(vol: ScalarVolume, new_dims) -> ScalarVolume:
    """Nearest-neighbour resampling onto a grid with ``new_dims`` voxels.

    The physical extent is preserved, so spacing scales by old/new per axis.
    """
    new_data = resample_array(vol.data, new_dims)
    spacing = tuple(s * o / n for s, o, n in zip(vol.spacing, vol.dims, new_data.shape))
    return ScalarVolume(new_data, spacing, vol.unit)


def sphere_mask(dims, radius: float, center=None) -> Mask:
    """Voxels whose centre lies within ``radius`` of ``center`` (grid centre by default)."""
    dims = tuple(dims)
    if center is None:
        center = tuple((n - 1) / 2 for n in dims)
    grids = np.meshgrid(*(np.arange(n) - c for n, c in zip(dims, center)), indexing="ij")
    return Mask(sum(g**2 for g in grids) <= radius**2)
