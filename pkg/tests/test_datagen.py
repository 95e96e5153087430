import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotqsm.datagen import (CropSpec, DatasetConfig, DatasetManifest, PathologyConfig, TeSampler,
                            background_field, build_dataset, crop_offsets, crop_patches, gen_pathology,
                            healthy_phantom, load_dataset, make_sample, pathological_indices,
                            regenerate_sample, simulate_sample, superpose)
from lotqsm.dipole import forward_field
from lotqsm.errors import DomainError, StructuralError
from lotqsm.phase import NoiseSpec
from lotqsm.volume import ScalarVolume, Unit


def test_pathology_config_validation():
    with pytest.raises(DomainError):
        PathologyConfig(n_spheres=(10, 5))
    with pytest.raises(DomainError):
        PathologyConfig(hemorrhage_prob=1.5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pathology_value_and_size(seed):
    cfg = PathologyConfig()
    lesion = gen_pathology(cfg, np.random.default_rng(seed))
    n = lesion.dims[0]
    assert lesion.dims == (n, n, n) and 12 <= n <= 24
    values = np.unique(lesion.data)
    nonzero = values[values != 0]
    assert len(nonzero) == 1
    v = nonzero[0]
    assert 0.4 <= v <= 1.2 or -0.3 <= v <= -0.1


def test_pathology_sign_follows_probability():
    always_calc = PathologyConfig(hemorrhage_prob=0.0)
    for seed in range(5):
        assert gen_pathology(always_calc, np.random.default_rng(seed)).data.min() < 0


def test_superpose_bounds():
    patch = ScalarVolume(np.zeros((8, 8, 8)))
    lesion = ScalarVolume(np.ones((3, 3, 3)))
    out = superpose(patch, lesion, (5, 0, 2))
    assert out.data.sum() == 27 and out.data[5:8, 0:3, 2:5].all()
    with pytest.raises(StructuralError):
        superpose(patch, lesion, (6, 0, 0))
    with pytest.raises(StructuralError):
        superpose(patch, lesion, (-1, 0, 0))


def test_crop_offsets_cover_grid():
    spec = CropSpec((4, 4, 4), (2, 3, 4))
    offs = crop_offsets((8, 8, 8), spec)
    assert len(offs) == 3 * 2 * 2
    assert offs[0] == (0, 0, 0) and offs[-1] == (4, 3, 4)
    vol = ScalarVolume(np.arange(512.0).reshape(8, 8, 8))
    off, patch = crop_patches(vol, spec)[5]
    np.testing.assert_array_equal(patch.data, vol.data[off[0]:off[0] + 4, off[1]:off[1] + 4, off[2]:off[2] + 4])
    with pytest.raises(StructuralError):
        crop_offsets((3, 8, 8), spec)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_te_sampler_range(seed):
    te = TeSampler().draw(np.random.default_rng(seed))
    assert 0.001 < te <= 0.060


def test_pathological_indices_exact_count():
    idx = pathological_indices(25, (0.6, 0.4), 3)
    assert len(idx) == 10 and all(0 <= i < 25 for i in idx)
    assert idx == pathological_indices(25, (0.6, 0.4), 3)
    with pytest.raises(DomainError):
        DatasetConfig(mix=(0.5, 0.6))


def test_healthy_phantom_and_background(rng):
    chi = healthy_phantom((16, 16, 16), rng)
    assert chi.unit is Unit.PPM and chi.data.std() > 0
    bg = background_field((16, 16, 16), rng, max_gradient=(0.005, 0.005))
    grad = np.sqrt(sum(g**2 for g in np.gradient(bg.data)))
    assert grad.max() == pytest.approx(0.005, rel=1e-12)


def test_simulate_sample_consistency(rng):
    chi = healthy_phantom((12, 12, 12), rng)
    sample = simulate_sample(chi, None, b0=3.0, rng=rng, te=0.02)
    np.testing.assert_array_equal(sample.local_field.data, forward_field(chi).data)
    assert np.all(np.abs(sample.phase_w.data) <= np.pi)
    noisy = simulate_sample(chi, None, b0=3.0, noise=NoiseSpec(20.0), rng=rng, te=0.02)
    assert not np.array_equal(noisy.magnitude.data, sample.magnitude.data)
    with pytest.raises(StructuralError):
        simulate_sample(chi, ScalarVolume(np.zeros((4, 4, 4))), rng=rng)


def test_lesion_larger_than_patch_is_cropped():
    cfg = DatasetConfig(n_samples=1, patch_dims=(8, 8, 8))
    sample = make_sample(cfg, 0, True)
    assert sample.chi.dims == (8, 8, 8) and sample.is_pathological


def test_build_and_regenerate(tmp_path):
    cfg = DatasetConfig(n_samples=5, patch_dims=(8, 8, 8), seed=11)
    manifest = build_dataset(tmp_path, cfg)
    assert manifest.counts == {"total": 5, "pathological": 2, "healthy": 3}
    loaded_manifest, samples = load_dataset(tmp_path)
    assert loaded_manifest.config_hash == manifest.config_hash
    reloaded = DatasetManifest.load(tmp_path / "manifest.json")
    for i, s in enumerate(samples):
        again = regenerate_sample(reloaded, i)
        np.testing.assert_array_equal(again.phase_w.data, s.phase_w.data)
        np.testing.assert_array_equal(again.chi.data, s.chi.data)
        np.testing.assert_array_equal(forward_field(s.chi).data, s.local_field.data)
        assert again.te == s.te


def test_healthy_sources_hash_checked(tmp_path, rng):
    src = healthy_phantom((12, 12, 12), rng)
    cfg = DatasetConfig(n_samples=2, patch_dims=(8, 8, 8))
    manifest = build_dataset(tmp_path, cfg, [src])
    np.testing.assert_array_equal(regenerate_sample(manifest, 1, [src]).chi.data,
                                  load_dataset(tmp_path)[1][1].chi.data)
    with pytest.raises(DomainError):
        regenerate_sample(manifest, 1, [src.like(src.data + 1.0)])
