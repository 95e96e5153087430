"""Image-quality metrics (NRMSE, PSNR, 3D SSIM), ROI tables and line profiles."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from lotqsm.errors import DomainError, StructuralError
from lotqsm.volume import Mask, ScalarVolume, roi_stats

IDENTICAL = "identical"


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float | None = None  # None: max - min of truth in the mask

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise DomainError(f"SSIM window must be a positive odd size, got {self.window}")
        if not self.sigma > 0:
            raise DomainError(f"SSIM sigma must be positive, got {self.sigma}")
        if self.dynamic_range is not None and not self.dynamic_range > 0:
            raise DomainError(f"dynamic_range must be positive, got {self.dynamic_range}")


def _masked(recon: ScalarVolume, truth: ScalarVolume, mask: Mask | None):
    if recon.dims != truth.dims:
        raise StructuralError(f"recon {recon.dims} and truth {truth.dims} differ in dims")
    if mask is None:
        mask = Mask.full(truth.dims)
    mask.check_dims(truth.dims)
    if mask.count == 0:
        raise DomainError("metric mask is empty")
    return recon.data[mask.data].astype(np.float64), truth.data[mask.data].astype(np.float64), mask


def nrmse(recon: ScalarVolume, truth: ScalarVolume, mask: Mask | None = None) -> float:
    """100 * ||recon - truth|| / ||truth|| over the mask, in percent."""
    r, t, _ = _masked(recon, truth, mask)
    norm = np.linalg.norm(t)
    if norm == 0:
        raise DomainError("truth has zero norm inside the mask")
    return float(100.0 * (np.linalg.norm(r - t) / norm))


def psnr(recon: ScalarVolume, truth: ScalarVolume, mask: Mask | None = None, peak: float | None = None) -> float:
    """10*log10(peak^2 / MSE) in dB; ``math.inf`` when the images are identical.

    ``peak`` defaults to max |truth| over the mask.
    """
    r, t, _ = _masked(recon, truth, mask)
    mse = float(np.mean((r - t) ** 2))
    if mse == 0:
        return math.inf
    peak = float(np.abs(t).max()) if peak is None else float(peak)
    if not peak > 0:
        raise DomainError(f"PSNR peak must be positive, got {peak}")
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - size // 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _smooth(data: np.ndarray, g: np.ndarray) -> np.ndarray:
    for axis in range(3):
        data = ndimage.correlate1d(data, g, axis=axis, mode="constant")
    return data


def ssim_centres(mask: Mask, window: int) -> np.ndarray:
    """Voxels whose whole window lies inside the grid and inside the mask."""
    cube = np.ones((window,) * 3, dtype=bool)
    return ndimage.binary_erosion(mask.data, structure=cube, border_value=0)


def ssim_map(recon: ScalarVolume, truth: ScalarVolume, mask: Mask | None = None,
             cfg: SsimConfig | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    """Local SSIM at every voxel, the valid-centre mask and the dynamic range used."""
    cfg = cfg or SsimConfig()
    _, t, mask = _masked(recon, truth, mask)
    L = cfg.dynamic_range if cfg.dynamic_range is not None else float(t.max() - t.min())
    if not L > 0:
        raise DomainError("SSIM dynamic range is zero (constant truth); pass dynamic_range explicitly")
    centres = ssim_centres(mask, cfg.window)
    if not centres.any():
        raise DomainError(f"no {cfg.window}^3 window fits inside the mask")
    x = np.asarray(recon.data, dtype=np.float64)
    y = np.asarray(truth.data, dtype=np.float64)
    g = gaussian_window_1d(cfg.window, cfg.sigma)
    mx, my = _smooth(x, g), _smooth(y, g)
    vx = _smooth(x * x, g) - mx * mx
    vy = _smooth(y * y, g) - my * my
    cxy = _smooth(x * y, g) - mx * my
    c1, c2 = (cfg.k1 * L) ** 2, (cfg.k2 * L) ** 2
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return s, centres, L


def ssim(recon: ScalarVolume, truth: ScalarVolume, mask: Mask | None = None, cfg: SsimConfig | None = None) -> float:
    """Mean 3D SSIM over centres whose Gaussian window lies fully in the mask."""
    s, centres, _ = ssim_map(recon, truth, mask, cfg)
    return float(s[centres].mean())


def line_profile(vol: ScalarVolume, start, end, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Trilinear samples along the segment start -> end (voxel coordinates).

    Returns distances from ``start`` in voxels and the sampled values.
    """
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    hi = np.array(vol.dims) - 1
    for p in (start, end):
        if p.shape != (3,) or np.any(p < 0) or np.any(p > hi):
            raise StructuralError(f"profile endpoint {tuple(p)} outside the grid {vol.dims}")
    if n_samples < 2:
        raise DomainError("a line profile needs at least 2 samples")
    t = np.linspace(0.0, 1.0, n_samples)
    pts = start[:, None] + (end - start)[:, None] * t[None, :]
    values = ndimage.map_coordinates(np.asarray(vol.data, dtype=np.float64), pts, order=1, mode="nearest")
    return t * float(np.linalg.norm(end - start)), values


def roi_table(vol: ScalarVolume, rois: dict[str, Mask]) -> list[dict]:
    """Mean and standard deviation per labelled ROI, in ppb (1000 * ppm)."""
    rows = []
    for label, roi in rois.items():
        mean, std, n = roi_stats(vol, roi)
        rows.append({"label": label, "mean_ppb": 1000.0 * mean, "std_ppb": 1000.0 * std, "voxels": n})
    return rows


@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    nrmse: float
    rois: list = field(default_factory=list)
    profile: dict | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nrmse < 0 or self.ssim > 1 + 1e-12:
            raise DomainError(f"metric out of range: nrmse={self.nrmse}, ssim={self.ssim}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.psnr):
            d["psnr"] = IDENTICAL
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(recon: ScalarVolume, truth: ScalarVolume, mask: Mask | None = None,
             rois: dict[str, Mask] | None = None, ssim_cfg: SsimConfig | None = None,
             peak: float | None = None) -> MetricsReport:
    ssim_cfg = ssim_cfg or SsimConfig()
    s_map, centres, dyn = ssim_map(recon, truth, mask, ssim_cfg)
    config = asdict(ssim_cfg) | {"dynamic_range_used": dyn, "psnr_peak": peak, "nrmse": "truth-norm percent"}
    return MetricsReport(
        psnr=psnr(recon, truth, mask, peak),
        ssim=float(s_map[centres].mean()),
        nrmse=nrmse(recon, truth, mask),
        rois=roi_table(recon, rois or {}),
        config=config,
    )
