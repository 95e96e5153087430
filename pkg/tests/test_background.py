import numpy as np
import pytest

from lotqsm.background import ResharpConfig, SmvKernel, conjugate_gradient, resharp
from lotqsm.datagen import background_field
from lotqsm.errors import ConvergenceError, DomainError, StructuralError
from lotqsm.volume import ScalarVolume, Unit, ball, sphere_mask

from oracles import direct_dft3


def test_cg_matches_dense_solve(rng):
    a = rng.normal(size=(12, 12))
    a = a @ a.T + 12 * np.eye(12)
    b = rng.normal(size=12)
    res = conjugate_gradient(lambda v: a @ v, b, 1e-12, 100)
    np.testing.assert_allclose(res.solution, np.linalg.solve(a, b), rtol=1e-9)
    assert res.iterations <= 12 + 2
    assert res.history[0] == 1.0 and res.residual <= 1e-12


def test_cg_zero_rhs():
    res = conjugate_gradient(lambda v: v, np.zeros(3), 1e-6, 10)
    assert res.iterations == 0 and not res.solution.any()


def test_smv_spectrum_matches_direct_dft():
    dims = (9, 8, 7)
    smv = SmvKernel.create(dims, 2)
    b = ball(2).astype(float)
    b /= b.sum()
    kernel = np.zeros(dims)
    for off in zip(*np.nonzero(b)):
        kernel[tuple((o - 2) % n for o, n in zip(off, dims))] += b[off]
    np.testing.assert_allclose(smv.spectrum, 1.0 - direct_dft3(kernel).real, atol=1e-13)
    assert smv.spectrum[0, 0, 0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(StructuralError):
        SmvKernel.create((4, 4, 4), 3)


def test_config_validation():
    with pytest.raises(DomainError):
        ResharpConfig(smv_radius=0)
    with pytest.raises(DomainError):
        ResharpConfig(tikhonov_lambda=-1.0)


def test_resharp_suppresses_exterior_sources(rng):
    dims = (40, 40, 40)
    bg = background_field(dims, rng)
    total = ScalarVolume(bg.data, unit=Unit.PPM)
    mask = sphere_mask(dims, 15)
    local, eroded, diag = resharp(total, mask, ResharpConfig(smv_radius=3), full_output=True)
    assert eroded.count < mask.count
    assert not local.data[~eroded.data].any()
    ratio = np.sqrt(np.mean(local.data[eroded.data] ** 2) / np.mean(bg.data[eroded.data] ** 2))
    assert ratio < 0.05
    assert diag.residual <= 1e-6


def test_resharp_error_paths():
    vol = ScalarVolume(np.ones((12, 12, 12)), unit=Unit.PPM)
    with pytest.raises(DomainError):
        resharp(vol, sphere_mask((12, 12, 12), 2.0))
    with pytest.raises(ConvergenceError) as info:
        resharp(vol.like(np.random.default_rng(0).normal(size=(12, 12, 12))), sphere_mask((12, 12, 12), 5.5),
                ResharpConfig(cg_max_iter=1, cg_tol=1e-12))
    assert info.value.iterations == 1
