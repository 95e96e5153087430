"""Synthetic training data: susceptibility patches -> local field -> wrapped phase.

Healthy susceptibility patches can come from any volumes the caller
supplies; without them a procedural phantom is used (smooth random tissue
plus ellipsoidal deep grey nuclei). Background fields are generated from
point sources outside the patch, so they are exactly harmonic inside it.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from lotqsm.dipole import AcquisitionParams, DipoleKernel, forward_field, phase_evolve
from lotqsm.errors import DomainError, StructuralError
from lotqsm.nifti import nifti_read, nifti_write
from lotqsm.phase import NoiseSpec, add_complex_noise
from lotqsm.volume import Mask, ScalarVolume, Unit, resample_array

log = logging.getLogger(__name__)

# Typical deep grey matter susceptibilities (ppm) used by the procedural phantom.
DEEP_GREY_PPM = {
    "globus_pallidus": 0.19,
    "putamen": 0.09,
    "caudate": 0.07,
    "substantia_nigra": 0.15,
    "red_nucleus": 0.12,
}

FIELDS = ("phase", "local", "chi", "mag")


def _ordered(name: str, pair) -> tuple:
    lo, hi = pair
    if lo > hi:
        raise DomainError(f"{name} range must be ordered, got {pair}")
    return (lo, hi)


@dataclass(frozen=True)
class PathologyConfig:
    n_spheres: tuple[int, int] = (5, 10)
    n_rects: tuple[int, int] = (5, 10)
    n_cubes: tuple[int, int] = (5, 10)
    shape_frac: tuple[float, float] = (0.10, 0.40)
    base_dims: int = 16
    resize_range: tuple[int, int] = (12, 24)
    hemorrhage_range: tuple[float, float] = (0.4, 1.2)
    calcification_range: tuple[float, float] = (-0.3, -0.1)
    hemorrhage_prob: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("n_spheres", "n_rects", "n_cubes", "shape_frac", "resize_range",
                     "hemorrhage_range", "calcification_range"):
            object.__setattr__(self, name, _ordered(name, tuple(getattr(self, name))))
        if not 0.0 <= self.hemorrhage_prob <= 1.0:
            raise DomainError(f"hemorrhage_prob must lie in [0, 1], got {self.hemorrhage_prob}")
        if self.base_dims < 1 or self.resize_range[0] < 1:
            raise DomainError("base_dims and resize_range must be positive")


@dataclass(frozen=True)
class CropSpec:
    window: tuple[int, int, int] = (64, 64, 64)
    stride: tuple[int, int, int] = (16, 26, 21)

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(w) for w in self.window))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        if min(self.stride) < 1 or min(self.window) < 1:
            raise DomainError(f"window and stride must be positive, got {self.window} / {self.stride}")


@dataclass(frozen=True)
class TeSampler:
    mean: float = 0.020
    std: float = 0.010
    valid_range: tuple[float, float] = (0.001, 0.060)

    def draw(self, rng: np.random.Generator) -> float:
        """Normal draw, redrawn until it falls inside (lo, hi]."""
        lo, hi = self.valid_range
        while True:
            te = float(rng.normal(self.mean, self.std))
            if lo < te <= hi:
                return te


@dataclass(frozen=True, eq=False)
class TrainingSample:
    phase_w: ScalarVolume
    local_field: ScalarVolume
    chi: ScalarVolume
    magnitude: ScalarVolume
    te: float
    b0: float
    is_pathological: bool = False

    def __post_init__(self):
        dims = {v.dims for v in (self.phase_w, self.local_field, self.chi, self.magnitude)}
        if len(dims) != 1:
            raise StructuralError(f"sample volumes disagree in dims: {sorted(dims)}")
        if not (self.te > 0 and self.b0 > 0):
            raise DomainError("te and b0 must be positive")


# --- shapes and phantoms -------------------------------------------------------


def _shape_mask(dims, kind: str, center, size) -> np.ndarray:
    grids = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
    if kind == "sphere":
        r = size[0] / 2
        return sum((g - c) ** 2 for g, c in zip(grids, center)) <= r**2
    # boxes: rectangles may have unequal edges, cubes share one edge length
    return np.logical_and.reduce([np.abs(g - c) <= s / 2 for g, c, s in zip(grids, center, size)])


def gen_pathology(cfg: PathologyConfig | None = None, rng: np.random.Generator | None = None) -> ScalarVolume:
    """Random lesion: a union of spheres, rectangular boxes and cubes.

    The binary union is resized to a random cubic matrix within
    ``cfg.resize_range`` and filled with one hemorrhage (positive) or
    calcification (negative) susceptibility.
    """
    cfg = cfg or PathologyConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    n = cfg.base_dims
    dims = (n, n, n)
    union = np.zeros(dims, dtype=bool)
    for kind, (lo, hi) in (("sphere", cfg.n_spheres), ("rect", cfg.n_rects), ("cube", cfg.n_cubes)):
        for _ in range(int(rng.integers(lo, hi, endpoint=True))):
            center = rng.uniform(0, n - 1, 3)
            if kind == "rect":
                size = rng.uniform(*cfg.shape_frac, 3) * n
            else:
                size = np.full(3, rng.uniform(*cfg.shape_frac) * n)
            union |= _shape_mask(dims, kind, center, size)
    s = int(rng.integers(cfg.resize_range[0], cfg.resize_range[1], endpoint=True))
    resized = resample_array(union, (s, s, s))
    if rng.random() < cfg.hemorrhage_prob:
        value = rng.uniform(*cfg.hemorrhage_range)
    else:
        value = rng.uniform(*cfg.calcification_range)
    return ScalarVolume(resized * value, unit=Unit.PPM)


def superpose(healthy_patch: ScalarVolume, lesion: ScalarVolume, position) -> ScalarVolume:
    """Add ``lesion`` onto ``healthy_patch`` with its corner at ``position``."""
    pos = tuple(int(p) for p in position)
    if len(pos) != 3 or any(p < 0 or p + n > m for p, n, m in zip(pos, lesion.dims, healthy_patch.dims)):
        raise StructuralError(
            f"lesion {lesion.dims} at {pos} does not fit inside patch {healthy_patch.dims}"
        )
    out = np.array(healthy_patch.data, dtype=np.float64)
    sl = tuple(slice(p, p + n) for p, n in zip(pos, lesion.dims))
    out[sl] += lesion.data
    return healthy_patch.like(out)


def crop_offsets(dims, spec: CropSpec) -> list[tuple[int, int, int]]:
    dims = tuple(dims)
    if any(w > d for w, d in zip(spec.window, dims)):
        raise StructuralError(f"crop window {spec.window} larger than volume {dims}")
    axes = [range(0, d - w + 1, s) for d, w, s in zip(dims, spec.window, spec.stride)]
    return [(i, j, k) for i in axes[0] for j in axes[1] for k in axes[2]]


def crop_patches(vol: ScalarVolume, spec: CropSpec | None = None) -> list[tuple[tuple[int, int, int], ScalarVolume]]:
    """Sliding-window patches in raster order of their offsets."""
    spec = spec or CropSpec()
    out = []
    for off in crop_offsets(vol.dims, spec):
        sl = tuple(slice(o, o + w) for o, w in zip(off, spec.window))
        out.append((off, vol.like(vol.data[sl])))
    return out


def healthy_phantom(dims, rng: np.random.Generator, spacing=(1.0, 1.0, 1.0),
                    edge_sigma: float = 1.0) -> ScalarVolume:
    """Synthetic healthy-tissue susceptibility patch (ppm).

    ``edge_sigma`` (voxels) blurs the nucleus boundaries to mimic partial
    volume; 0 keeps them binary.
    """
    dims = tuple(int(n) for n in dims)
    tissue = ndimage.gaussian_filter(rng.normal(size=dims), sigma=max(1.0, min(dims) / 12), mode="wrap")
    tissue *= 0.03 / max(tissue.std(), 1e-12)
    grids = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
    for value in DEEP_GREY_PPM.values():
        center = rng.uniform(0.2, 0.8, 3) * np.array(dims)
        axes = rng.uniform(0.06, 0.18, 3) * np.array(dims) + 0.75
        inside = sum(((g - c) / a) ** 2 for g, c, a in zip(grids, center, axes)) <= 1.0
        tissue[inside] = value
    if edge_sigma > 0:
        tissue = ndimage.gaussian_filter(tissue, edge_sigma, mode="wrap")
    return ScalarVolume(tissue, spacing, Unit.PPM)


def background_field(dims, rng: np.random.Generator, n_sources: int = 4,
                     max_gradient: tuple[float, float] = (0.002, 0.01)) -> ScalarVolume:
    """Field (ppm) of point dipoles placed outside the grid, B0 along z.

    Sources sit 1.5-3 grid extents from the centre in random directions with
    random signed strengths. The sum is rescaled so its largest voxel-to-voxel
    gradient equals a value drawn from ``max_gradient`` (ppm per voxel),
    which keeps the phase sampled well enough to stay meaningful once wrapped.
    """
    dims = tuple(int(n) for n in dims)
    centre = (np.array(dims) - 1) / 2
    extent = float(max(dims))
    grids = [g - c for g, c in zip(np.meshgrid(*(np.arange(n, dtype=float) for n in dims), indexing="ij"), centre)]
    out = np.zeros(dims)
    for _ in range(n_sources):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        src = direction * rng.uniform(1.5, 3.0) * extent
        dx, dy, dz = (g - s for g, s in zip(grids, src))
        r2 = dx**2 + dy**2 + dz**2
        # strength normalised to the source's field scale at the grid centre
        strength = rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0]) * np.linalg.norm(src) ** 3
        out += strength * (3 * dz**2 / r2 - 1) / r2**1.5
    grad = np.sqrt(sum(g**2 for g in np.gradient(out))) if min(dims) > 1 else np.abs(out)
    out *= rng.uniform(*max_gradient) / max(float(grad.max()), 1e-12)
    return ScalarVolume(out, unit=Unit.PPM)


# --- samples -----------------------------------------------------------------


def simulate_sample(
    chi_patch: ScalarVolume,
    bg_field: ScalarVolume | None = None,
    te_sampler: TeSampler | None = None,
    b0: float = 3.0,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | None = None,
    te: float | None = None,
    magnitude: ScalarVolume | None = None,
    is_pathological: bool = False,
) -> TrainingSample:
    """Forward-simulate one training sample from a susceptibility patch.

    local = D * chi; total = local + background; phase = wrap(scale(TE) * total).
    ``te`` overrides the sampler. Magnitude defaults to ones.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if bg_field is not None and bg_field.dims != chi_patch.dims:
        raise StructuralError(f"background {bg_field.dims} and chi {chi_patch.dims} differ in dims")
    local = forward_field(chi_patch, DipoleKernel.for_volume(chi_patch))
    total = local.data + (bg_field.data if bg_field is not None else 0.0)
    if te is None:
        te = (te_sampler or TeSampler()).draw(rng)
    params = AcquisitionParams(b0=b0, te_list=(te,))
    phase = phase_evolve(local.like(total), params, 0)
    mag = magnitude if magnitude is not None else chi_patch.like(np.ones(chi_patch.dims), Unit.DIMENSIONLESS)
    if noise is not None:
        mag, phase = add_complex_noise(mag, phase, noise, Mask.full(mag.dims))
    return TrainingSample(phase, local, chi_patch, mag, float(te), float(b0), is_pathological)


def _place_lesion(patch: ScalarVolume, lesion: ScalarVolume, rng: np.random.Generator) -> ScalarVolume:
    # lesions larger than the patch are cut to a random window that fits
    if any(l > p for l, p in zip(lesion.dims, patch.dims)):
        size = [min(l, p) for l, p in zip(lesion.dims, patch.dims)]
        start = [int(rng.integers(0, l - s, endpoint=True)) for l, s in zip(lesion.dims, size)]
        lesion = lesion.like(lesion.data[tuple(slice(a, a + s) for a, s in zip(start, size))])
    pos = [int(rng.integers(0, p - l, endpoint=True)) for p, l in zip(patch.dims, lesion.dims)]
    return superpose(patch, lesion, pos)


def _random_crop(vol: ScalarVolume, dims, rng: np.random.Generator) -> ScalarVolume:
    if any(d > n for d, n in zip(dims, vol.dims)):
        raise StructuralError(f"healthy source {vol.dims} smaller than patch {tuple(dims)}")
    start = [int(rng.integers(0, n - d, endpoint=True)) for n, d in zip(vol.dims, dims)]
    return vol.like(vol.data[tuple(slice(a, a + d) for a, d in zip(start, dims))], Unit.PPM)


# --- datasets ----------------------------------------------------------------


@dataclass
class DatasetConfig:
    n_samples: int = 100
    mix: tuple[float, float] = (0.6, 0.4)
    seed: int = 0
    patch_dims: tuple[int, int, int] = (16, 16, 16)
    b0: float = 3.0
    noise_snr: float | None = None
    dtype: str = "float64"
    te_sampler: TeSampler = field(default_factory=TeSampler)
    pathology: PathologyConfig = field(default_factory=PathologyConfig)

    def __post_init__(self):
        if len(self.mix) != 2 or min(self.mix) < 0 or abs(sum(self.mix) - 1.0) > 1e-9:
            raise DomainError(f"mix fractions (healthy, pathological) must sum to 1, got {self.mix}")
        if self.n_samples < 1:
            raise DomainError("n_samples must be positive")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(obj) -> str:
    return sha256_bytes(json.dumps(obj, sort_keys=True, default=str).encode())


@dataclass
class DatasetManifest:
    config: dict
    config_hash: str
    counts: dict
    samples: list
    healthy_source_hashes: list = field(default_factory=list)
    version: int = 1

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> DatasetManifest:
        return cls(**json.loads(Path(path).read_text()))

    def dataset_config(self) -> DatasetConfig:
        c = dict(self.config)
        c["te_sampler"] = TeSampler(**{k: tuple(v) if isinstance(v, list) else v for k, v in c["te_sampler"].items()})
        c["pathology"] = PathologyConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in c["pathology"].items()})
        c["mix"] = tuple(c["mix"])
        c["patch_dims"] = tuple(c["patch_dims"])
        return DatasetConfig(**c)


def pathological_indices(n: int, mix, seed: int) -> set[int]:
    n_path = int(round(n * mix[1]))
    perm = np.random.default_rng(seed).permutation(n)
    return {int(i) for i in perm[:n_path]}


def make_sample(cfg: DatasetConfig, index: int, pathological: bool,
                healthy_sources: Sequence[ScalarVolume] | None = None) -> TrainingSample:
    """Generate sample ``index``; its RNG stream depends only on (seed, index)."""
    rng = np.random.default_rng([cfg.seed, index])
    if healthy_sources:
        src = healthy_sources[int(rng.integers(len(healthy_sources)))]
        chi = _random_crop(src, cfg.patch_dims, rng)
    else:
        chi = healthy_phantom(cfg.patch_dims, rng)
    if pathological:
        lesion = gen_pathology(cfg.pathology, rng)
        chi = _place_lesion(chi, lesion, rng)
    bg = background_field(cfg.patch_dims, rng)
    noise = NoiseSpec(cfg.noise_snr, int(rng.integers(2**31))) if cfg.noise_snr else None
    return simulate_sample(chi, bg, cfg.te_sampler, cfg.b0, noise, rng, is_pathological=pathological)


def _sample_paths(out_dir: Path, index: int) -> dict[str, Path]:
    return {name: out_dir / f"sample_{index:05d}_{name}.nii" for name in FIELDS}


def write_sample(sample: TrainingSample, out_dir: Path, index: int, dtype: str) -> dict[str, str]:
    vols = dict(zip(FIELDS, (sample.phase_w, sample.local_field, sample.chi, sample.magnitude)))
    hashes = {}
    for name, path in _sample_paths(out_dir, index).items():
        nifti_write(vols[name], path, dtype)
        hashes[path.name] = sha256_bytes(path.read_bytes())
    return hashes


def build_dataset(out_dir, cfg: DatasetConfig | None = None,
                  healthy_sources: Sequence[ScalarVolume] | None = None) -> DatasetManifest:
    """Generate ``cfg.n_samples`` samples into ``out_dir`` plus ``manifest.json``.

    Exactly round(n * mix[1]) samples are pathological.
    """
    cfg = cfg or DatasetConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path_idx = pathological_indices(cfg.n_samples, cfg.mix, cfg.seed)
    entries = []
    for i in range(cfg.n_samples):
        sample = make_sample(cfg, i, i in path_idx, healthy_sources)
        hashes = write_sample(sample, out_dir, i, cfg.dtype)
        entries.append({"index": i, "pathological": sample.is_pathological, "te": sample.te, "files": hashes})
    config = json.loads(json.dumps(asdict(cfg)))
    counts = {"total": cfg.n_samples, "pathological": len(path_idx), "healthy": cfg.n_samples - len(path_idx)}
    src_hashes = [sha256_bytes(np.ascontiguousarray(s.data).tobytes()) for s in healthy_sources or ()]
    manifest = DatasetManifest(config, config_hash(config), counts, entries, src_hashes)
    manifest.save(out_dir / "manifest.json")
    log.info("wrote %d samples to %s (config %s)", cfg.n_samples, out_dir, manifest.config_hash[:12])
    return manifest


def regenerate_sample(manifest: DatasetManifest, index: int,
                      healthy_sources: Sequence[ScalarVolume] | None = None) -> TrainingSample:
    cfg = manifest.dataset_config()
    if manifest.healthy_source_hashes:
        got = [sha256_bytes(np.ascontiguousarray(s.data).tobytes()) for s in healthy_sources or ()]
        if got != manifest.healthy_source_hashes:
            raise DomainError("healthy sources do not match the hashes recorded in the manifest")
    entry = manifest.samples[index]
    return make_sample(cfg, index, entry["pathological"], healthy_sources)


def load_sample(out_dir, manifest: DatasetManifest, index: int) -> TrainingSample:
    out_dir = Path(out_dir)
    entry = manifest.samples[index]
    vols = {}
    for name, path in _sample_paths(out_dir, index).items():
        try:
            vols[name] = nifti_read(path)[0]
        except OSError as exc:
            raise OSError(f"cannot read dataset file {path}: {exc}") from exc
    return TrainingSample(vols["phase"], vols["local"], vols["chi"], vols["mag"],
                          entry["te"], manifest.config["b0"], entry["pathological"])


def load_dataset(out_dir) -> tuple[DatasetManifest, list[TrainingSample]]:
    manifest = DatasetManifest.load(Path(out_dir) / "manifest.json")
    return manifest, [load_sample(out_dir, manifest, i) for i in range(len(manifest.samples))]
