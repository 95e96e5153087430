"""Dipole kernel, forward field simulation, TKD inversion and echo fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lotqsm.errors import DomainError, StructuralError
from lotqsm.phase import wrap_array
from lotqsm.volume import ScalarVolume, Unit

GAMMA_BAR = 42.5764  # MHz/T, hydrogen
DEFAULT_TKD_THRESHOLD = 0.2


def radians_per_ppm(b0: float, te: float, gamma_bar: float = GAMMA_BAR) -> float:
    """Phase accrued by a 1 ppm field offset: 2*pi * gamma_bar*1e6 * B0 * 1e-6 * TE."""
    return 2.0 * np.pi * gamma_bar * b0 * te


@dataclass(frozen=True)
class AcquisitionParams:
    b0: float = 3.0
    te_list: tuple[float, ...] = (0.02,)
    gamma_bar: float = GAMMA_BAR
    b0_direction: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        te = tuple(float(t) for t in np.atleast_1d(self.te_list))
        object.__setattr__(self, "te_list", te)
        object.__setattr__(self, "b0_direction", tuple(float(v) for v in self.b0_direction))
        if not self.b0 > 0:
            raise DomainError(f"b0 must be positive, got {self.b0}")
        if not self.gamma_bar > 0:
            raise DomainError(f"gamma_bar must be positive, got {self.gamma_bar}")
        if not te or min(te) <= 0:
            raise DomainError(f"echo times must be positive, got {te}")
        if any(b <= a for a, b in zip(te, te[1:])):
            raise DomainError(f"echo times must be strictly increasing, got {te}")
        if abs(np.linalg.norm(self.b0_direction) - 1.0) > 1e-12:
            raise DomainError(f"b0_direction must be a unit vector, got {self.b0_direction}")


@dataclass(frozen=True)
class EchoSeries:
    params: AcquisitionParams
    phases: Sequence[ScalarVolume]
    magnitudes: Sequence[ScalarVolume] = field(default=())

    def __post_init__(self):
        phases = tuple(self.phases)
        mags = tuple(self.magnitudes) or tuple(p.like(np.ones(p.dims), Unit.DIMENSIONLESS) for p in phases)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "magnitudes", mags)
        n = len(self.params.te_list)
        if len(phases) != n or len(mags) != n:
            raise StructuralError(
                f"{n} echo times but {len(phases)} phase and {len(mags)} magnitude volumes"
            )
        dims = {v.dims for v in phases + mags}
        if len(dims) != 1:
            raise StructuralError(f"echo volumes have inconsistent dims {sorted(dims)}")


def kspace_grid(dims, spacing=(1.0, 1.0, 1.0)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spatial frequencies (cycles/mm) on the unshifted FFT grid."""
    axes = [np.fft.fftfreq(n, d=s) for n, s in zip(dims, spacing)]
    return np.meshgrid(*axes, indexing="ij")


@dataclass(frozen=True, eq=False)
class DipoleKernel:
    """Fourier-domain unit dipole response 1/3 - (k.b)^2/|k|^2 with D(0) = 0."""

    dims: tuple[int, int, int]
    spectrum: np.ndarray

    @classmethod
    def create(cls, dims, spacing=(1.0, 1.0, 1.0), b0_direction=(0.0, 0.0, 1.0)) -> DipoleKernel:
        dims = tuple(int(n) for n in dims)
        b = np.asarray(b0_direction, dtype=np.float64)
        b = b / np.linalg.norm(b)
        kx, ky, kz = kspace_grid(dims, spacing)
        k2 = kx**2 + ky**2 + kz**2
        kb = kx * b[0] + ky * b[1] + kz * b[2]
        with np.errstate(invalid="ignore", divide="ignore"):
            d = 1.0 / 3.0 - kb**2 / k2
        d[0, 0, 0] = 0.0
        d.setflags(write=False)
        return cls(dims, d)

    @classmethod
    def for_volume(cls, vol: ScalarVolume, b0_direction=(0.0, 0.0, 1.0)) -> DipoleKernel:
        return cls.create(vol.dims, vol.spacing, b0_direction)

    def check(self, dims) -> None:
        if tuple(dims) != self.dims:
            raise StructuralError(f"volume dims {tuple(dims)} do not match kernel dims {self.dims}")


def forward_field_array(chi: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(spectrum * np.fft.fftn(chi)).real


def forward_field(chi: ScalarVolume, d: DipoleKernel | None = None) -> ScalarVolume:
    """Field perturbation (ppm) produced by susceptibility ``chi`` (ppm)."""
    d = d or DipoleKernel.for_volume(chi)
    d.check(chi.dims)
    return chi.like(forward_field_array(chi.data, d.spectrum), Unit.PPM)


def phase_evolve(field_ppm: ScalarVolume, params: AcquisitionParams, te_index: int = 0) -> ScalarVolume:
    """Wrapped phase accrued by ``field_ppm`` at echo ``te_index``."""
    if not 0 <= te_index < len(params.te_list):
        raise DomainError(f"te_index {te_index} out of range for {len(params.te_list)} echoes")
    scale = radians_per_ppm(params.b0, params.te_list[te_index], params.gamma_bar)
    return field_ppm.like(wrap_array(scale * field_ppm.data), Unit.RADIANS)


def tkd_spectrum(d: DipoleKernel, threshold: float) -> np.ndarray:
    """Kernel with |D| clamped from below at ``threshold`` (sign kept, zero bins -> +threshold)."""
    if not 0 < threshold <= 1.0 / 3.0:
        raise DomainError(f"TKD threshold must lie in (0, 1/3], got {threshold}")
    spec = d.spectrum.copy()
    small = np.abs(spec) < threshold
    spec[small] = np.where(spec[small] < 0, -threshold, threshold)
    return spec


def tkd_invert(field_ppm: ScalarVolume, d: DipoleKernel | None = None, threshold: float = DEFAULT_TKD_THRESHOLD) -> ScalarVolume:
    """Truncated k-space division.

    Bins with |D| < threshold are divided by sign(D)*threshold instead of D;
    the DC bin is set to zero.
    """
    d = d or DipoleKernel.for_volume(field_ppm)
    d.check(field_ppm.dims)
    spec = tkd_spectrum(d, threshold)
    f = np.fft.fftn(field_ppm.data) / spec
    f[0, 0, 0] = 0.0
    return field_ppm.like(np.fft.ifftn(f).real, Unit.PPM)


def echo_fit(
    per_echo_values: Sequence[ScalarVolume],
    magnitudes: Sequence[ScalarVolume],
    te_list: Sequence[float],
    return_flags: bool = False,
):
    """Magnitude-weighted least-squares slope through the origin.

    Each ``per_echo_values[i]`` is a TE-scaled quantity Y_i; per voxel the
    result is sum(M_i TE_i Y_i) / sum(M_i TE_i^2). Voxels with a zero
    denominator are set to 0 and, with ``return_flags``, reported in a
    boolean array.
    """
    n = len(per_echo_values)
    if n < 1 or len(magnitudes) != n or len(te_list) != n:
        raise StructuralError(
            f"echo_fit needs equal-length inputs, got {n} values, {len(magnitudes)} magnitudes, "
            f"{len(te_list)} echo times"
        )
    te = np.asarray(te_list, dtype=np.float64)
    if np.any(te <= 0):
        raise DomainError(f"echo times must be positive, got {tuple(te)}")
    dims = per_echo_values[0].dims
    if any(v.dims != dims for v in list(per_echo_values) + list(magnitudes)):
        raise StructuralError("echo_fit volumes have inconsistent dims")
    num = np.zeros(dims)
    den = np.zeros(dims)
    for y, m, t in zip(per_echo_values, magnitudes, te):
        num += m.data * t * y.data
        den += m.data * t * t
    flags = den == 0
    x = np.divide(num, den, out=np.zeros(dims), where=~flags)
    out = per_echo_values[0].like(x)
    return (out, flags) if return_flags else out
