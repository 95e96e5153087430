"""Phase wrapping, the 27-point Laplacian stencil, the LoT operator,
FFT Laplacian unwrapping and the complex Gaussian noise model."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from lotqsm.errors import DomainError, StructuralError
from lotqsm.volume import Mask, ScalarVolume, Unit

TWO_PI = 2.0 * np.pi

# Transfer-function bins below this fraction of the peak are treated as nullspace.
INVERSE_CUTOFF = 1e-6

STANDARD_SNRS = (80.0, 50.0, 25.0, 10.0)


# 13 x the canonical weights; half-integers, so their float sum is exactly 0
_OUTER = [[1.0, 1.5, 1.0], [1.5, 3.0, 1.5], [1.0, 1.5, 1.0]]
_MIDDLE = [[1.5, 3.0, 1.5], [3.0, -44.0, 3.0], [1.5, 3.0, 1.5]]
CANONICAL_NUMERATORS = np.array([_OUTER, _MIDDLE, _OUTER])
CANONICAL_DENOMINATOR = 13.0


def _canonical_weights() -> np.ndarray:
    return CANONICAL_NUMERATORS / CANONICAL_DENOMINATOR


@dataclass(frozen=True, eq=False)
class LaplacianStencil:
    """3x3x3 discrete Laplacian kernel (voxel units)."""

    weights: np.ndarray = field(default_factory=_canonical_weights)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (3, 3, 3):
            raise StructuralError(f"stencil weights must be 3x3x3, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def canonical(cls) -> LaplacianStencil:
        return cls()

    def transfer_function(self, dims) -> np.ndarray:
        """Real frequency response of the stencil under periodic extension."""
        return _transfer_function(tuple(int(n) for n in dims), self.weights.tobytes())


@lru_cache(maxsize=8)
def _transfer_function(dims, weight_bytes) -> np.ndarray:
    weights = np.frombuffer(weight_bytes, dtype=np.float64).reshape(3, 3, 3)
    kernel = np.zeros(dims)
    # place the centre tap at the origin so the response is real for symmetric weights
    for i, j, k in np.ndindex(3, 3, 3):
        kernel[(i - 1) % dims[0], (j - 1) % dims[1], (k - 1) % dims[2]] += weights[i, j, k]
    out = np.fft.fftn(kernel).real
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NoiseSpec:
    snr: float
    rng_seed: int = 0

    def __post_init__(self):
        if not self.snr > 0:
            raise DomainError(f"snr must be positive, got {self.snr}")


def wrap_array(phase: np.ndarray) -> np.ndarray:
    """Fold phase into (-pi, pi].

    Values already in range pass through bit-for-bit, which makes the
    operation exactly idempotent.
    """
    phase = np.asarray(phase, dtype=np.float64)
    out = phase - TWO_PI * np.round(phase / TWO_PI)
    out = np.where(out <= -np.pi, out + TWO_PI, out)
    return np.where(out > np.pi, out - TWO_PI, out)


def wrap(phase: ScalarVolume) -> ScalarVolume:
    return phase.like(wrap_array(phase.data), Unit.RADIANS)


def _require_stencil_grid(vol: ScalarVolume) -> None:
    if min(vol.dims) < 3:
        raise StructuralError(f"stencil operations need at least 3 voxels per axis, got {vol.dims}")
    if not vol.isotropic:
        raise DomainError(
            f"the 27-point stencil assumes isotropic voxels, got spacing {vol.spacing}; "
            "resample to isotropic resolution first"
        )


def stencil_array(data: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # symmetric kernel, so correlation and convolution coincide; zero outside the grid
    return ndimage.correlate(data, weights, mode="constant", cval=0.0)


def stencil_apply(vol: ScalarVolume, k: LaplacianStencil | None = None) -> ScalarVolume:
    """Zero-padded 3D convolution with the stencil."""
    _require_stencil_grid(vol)
    k = k or LaplacianStencil()
    return vol.like(stencil_array(vol.data, k.weights))


def lot_numerator_array(phase_w: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """cos(p) * (K * sin p) - sin(p) * (K * cos p) with zero-padded convolution."""
    p = wrap_array(phase_w)
    s, c = np.sin(p), np.cos(p)
    return c * stencil_array(s, weights) - s * stencil_array(c, weights)


def lot(phase_w: ScalarVolume, b0: float, te: float, k: LaplacianStencil | None = None) -> ScalarVolume:
    """Laplacian of the unwrapped phase computed from wrapped phase, over B0*TE.

    The input is re-wrapped first, so any 2*pi*k offset that survives floating
    point exactly yields bit-identical output.

    Parameters
    ----------
    phase_w : ScalarVolume
        Raw phase in radians (wrapped or not).
    b0 : float
        Main field in tesla.
    te : float
        Echo time in seconds.
    """
    if not (b0 > 0 and te > 0):
        raise DomainError(f"b0 and te must be positive, got b0={b0}, te={te}")
    _require_stencil_grid(phase_w)
    k = k or LaplacianStencil()
    num = lot_numerator_array(phase_w.data, k.weights)
    return phase_w.like(num / (b0 * te), Unit.RAD_PER_TESLA_SECOND)


def laplacian_unwrap_array(phase_w: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    weights = _canonical_weights() if weights is None else weights
    p = wrap_array(phase_w)
    transfer = _transfer_function(p.shape, np.ascontiguousarray(weights, dtype=np.float64).tobytes())
    s, c = np.sin(p), np.cos(p)
    lap_s = np.fft.ifftn(transfer * np.fft.fftn(s)).real
    lap_c = np.fft.ifftn(transfer * np.fft.fftn(c)).real
    spectrum = np.fft.fftn(c * lap_s - s * lap_c)
    keep = np.abs(transfer) >= INVERSE_CUTOFF * np.abs(transfer).max()
    inv = np.zeros_like(spectrum)
    inv[keep] = spectrum[keep] / transfer[keep]
    return np.fft.ifftn(inv).real


def laplacian_unwrap(phase_w: ScalarVolume, k: LaplacianStencil | None = None) -> ScalarVolume:
    """Unwrap by inverting the stencil Laplacian of the trigonometric Laplacian.

    Both the forward Laplacian and its inverse use periodic extension (FFT),
    so the result is defined up to the stencil's nullspace; the DC component
    is always zero.
    """
    _require_stencil_grid(phase_w)
    k = k or LaplacianStencil()
    return phase_w.like(laplacian_unwrap_array(phase_w.data, k.weights), Unit.RADIANS)


def noise_sigma(mag: np.ndarray, mask: np.ndarray, snr: float) -> float:
    if not mask.any():
        raise DomainError("noise mask is empty")
    return float(mag[mask].mean()) / snr


def add_complex_noise(
    mag: ScalarVolume, phase_w: ScalarVolume, spec: NoiseSpec, mask: Mask
) -> tuple[ScalarVolume, ScalarVolume]:
    """Add i.i.d. Gaussian noise to the real and imaginary parts of M*exp(j*phase).

    sigma is the mean magnitude inside ``mask`` divided by ``spec.snr``.
    Returns the noisy magnitude and the re-wrapped noisy phase.
    """
    if mag.dims != phase_w.dims:
        raise StructuralError(f"magnitude {mag.dims} and phase {phase_w.dims} differ in dims")
    mask.check_dims(mag.dims)
    sigma = noise_sigma(mag.data, mask.data, spec.snr)
    rng = np.random.default_rng(spec.rng_seed)
    noise_r = rng.normal(0.0, sigma, mag.dims)
    noise_i = rng.normal(0.0, sigma, mag.dims)
    z = mag.data * np.exp(1j * phase_w.data) + noise_r + 1j * noise_i
    return mag.like(np.abs(z)), phase_w.like(wrap_array(np.angle(z)), Unit.RADIANS)
