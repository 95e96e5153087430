import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotqsm.dipole import (AcquisitionParams, DipoleKernel, EchoSeries, echo_fit, forward_field,
                           phase_evolve, radians_per_ppm, tkd_invert, tkd_spectrum)
from lotqsm.errors import DomainError, StructuralError
from lotqsm.volume import ScalarVolume, Unit

from oracles import dipole_direct, direct_dft3, direct_idft3, weighted_ls_dense


@pytest.mark.parametrize("dims", [(4, 5, 6), (7, 4, 3)])
def test_kernel_matches_voxel_loop(dims):
    np.testing.assert_allclose(DipoleKernel.create(dims).spectrum, dipole_direct(dims), atol=1e-15)


def test_kernel_oblique_direction():
    b = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(DipoleKernel.create((5, 5, 5), b0_direction=b).spectrum,
                               dipole_direct((5, 5, 5), b), atol=1e-15)


def test_forward_matches_direct_dft(rng):
    chi = ScalarVolume(rng.normal(size=(5, 6, 4)), unit=Unit.PPM)
    d = DipoleKernel.for_volume(chi)
    expected = direct_idft3(d.spectrum * direct_dft3(chi.data)).real
    np.testing.assert_allclose(forward_field(chi, d).data, expected, atol=1e-13)


def test_forward_rejects_mismatched_kernel():
    with pytest.raises(StructuralError):
        forward_field(ScalarVolume(np.zeros((4, 4, 4))), DipoleKernel.create((4, 4, 5)))


def test_phase_evolve_scale():
    assert radians_per_ppm(3.0, 0.02) == pytest.approx(2 * np.pi * 42.5764 * 3.0 * 0.02)
    field = ScalarVolume(np.full((2, 2, 2), 0.01), unit=Unit.PPM)
    params = AcquisitionParams(3.0, (0.01, 0.02))
    ph = phase_evolve(field, params, 1)
    assert ph.unit is Unit.RADIANS
    np.testing.assert_allclose(ph.data, 0.01 * radians_per_ppm(3.0, 0.02))
    with pytest.raises(DomainError):
        phase_evolve(field, params, 2)


@pytest.mark.parametrize("kw", [{"b0": 0.0}, {"te_list": (0.02, 0.01)}, {"te_list": (-0.01,)},
                                {"b0_direction": (0.0, 0.0, 2.0)}])
def test_acquisition_validation(kw):
    with pytest.raises(DomainError):
        AcquisitionParams(**kw)


def test_echo_series_dims():
    vol = ScalarVolume(np.zeros((2, 2, 2)))
    with pytest.raises(StructuralError):
        EchoSeries(AcquisitionParams(3.0, (0.01, 0.02)), [vol])
    series = EchoSeries(AcquisitionParams(3.0, (0.01,)), [vol])
    assert series.magnitudes[0].data.sum() == 8


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 1.0 / 3.0))
def test_tkd_spectrum_floor(threshold):
    d = DipoleKernel.create((6, 6, 6))
    spec = tkd_spectrum(d, threshold)
    assert np.abs(spec).min() >= threshold
    big = np.abs(d.spectrum) >= threshold
    np.testing.assert_array_equal(spec[big], d.spectrum[big])


def test_tkd_inverts_where_kernel_is_large(rng):
    d = DipoleKernel.create((8, 8, 8))
    spec = np.fft.fftn(rng.normal(size=(8, 8, 8)))
    spec[np.abs(d.spectrum) < 0.2] = 0
    spec[0, 0, 0] = 0
    chi = ScalarVolume(np.fft.ifftn(spec).real)
    back = tkd_invert(forward_field(chi, d), d, 0.2)
    np.testing.assert_allclose(back.data, chi.data, atol=1e-12)
    with pytest.raises(DomainError):
        tkd_invert(chi, d, 0.5)


def test_echo_fit_matches_dense_least_squares(rng):
    te = np.array([0.005, 0.012, 0.02, 0.031])
    y = rng.normal(size=(4, 3, 3, 2))
    w = rng.uniform(0.0, 2.0, size=y.shape)
    w[:, 0, 0, 0] = 0.0
    vols = [ScalarVolume(v) for v in y]
    mags = [ScalarVolume(v) for v in w]
    out, flags = echo_fit(vols, mags, te, return_flags=True)
    np.testing.assert_allclose(out.data, weighted_ls_dense(y, w, te), rtol=1e-12, atol=1e-14)
    assert flags[0, 0, 0] and flags.sum() == 1
    assert out.data[0, 0, 0] == 0.0


def test_echo_fit_exact_for_linear_data():
    te = [0.01, 0.02, 0.03]
    slope = np.linspace(-1, 1, 8).reshape(2, 2, 2)
    vols = [ScalarVolume(slope * t) for t in te]
    mags = [ScalarVolume(np.ones((2, 2, 2))) for _ in te]
    np.testing.assert_allclose(echo_fit(vols, mags, te).data, slope, rtol=1e-13)
    with pytest.raises(StructuralError):
        echo_fit(vols, mags[:2], te)
