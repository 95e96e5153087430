import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotqsm.errors import DomainError, StructuralError
from lotqsm.metrics import (SsimConfig, evaluate, gaussian_window_1d, line_profile, nrmse, psnr, roi_table,
                            ssim, ssim_map)
from lotqsm.volume import Mask, ScalarVolume, sphere_mask

from oracles import ssim_window_direct


@pytest.fixture
def pair(rng):
    truth = ScalarVolume(rng.normal(size=(14, 14, 14)))
    recon = truth.like(truth.data + 0.1 * rng.normal(size=truth.dims))
    return recon, truth


def test_nrmse_and_psnr_definitions(pair):
    recon, truth = pair
    r, t = recon.data, truth.data
    assert nrmse(recon, truth) == pytest.approx(100 * np.linalg.norm(r - t) / np.linalg.norm(t), rel=1e-14)
    mse = np.mean((r - t) ** 2)
    assert psnr(recon, truth) == pytest.approx(10 * np.log10(np.abs(t).max() ** 2 / mse), rel=1e-14)
    assert psnr(recon, truth, peak=2.0) == pytest.approx(10 * np.log10(4.0 / mse), rel=1e-14)
    assert psnr(truth, truth) == math.inf


def test_masked_metrics_ignore_outside(pair):
    recon, truth = pair
    mask = sphere_mask(truth.dims, 5)
    corrupted = recon.like(np.where(mask.data, recon.data, 1e6))
    assert nrmse(corrupted, truth, mask) == nrmse(recon, truth, mask)
    with pytest.raises(DomainError):
        nrmse(recon, truth, Mask(np.zeros(truth.dims)))
    with pytest.raises(StructuralError):
        nrmse(recon, ScalarVolume(np.ones((2, 2, 2))))
    with pytest.raises(DomainError):
        nrmse(recon, truth.like(np.zeros(truth.dims)))


def test_gaussian_window():
    g = gaussian_window_1d(11, 1.5)
    assert g.sum() == pytest.approx(1.0) and g.argmax() == 5
    np.testing.assert_allclose(g, g[::-1])


def test_ssim_matches_window_oracle(pair):
    recon, truth = pair
    cfg = SsimConfig(window=5, sigma=1.0)
    s, centres, L = ssim_map(recon, truth, None, cfg)
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    for centre in [(2, 2, 2), (7, 6, 5), (11, 11, 11)]:
        assert centres[centre]
        ref = ssim_window_direct(recon.data, truth.data, centre, 5, 1.0, c1, c2)
        assert s[centre] == pytest.approx(ref, abs=1e-12)
    assert not centres[1, 5, 5]
    assert ssim(truth, truth) == pytest.approx(1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ssim_symmetric_with_fixed_range(seed):
    g = np.random.default_rng(seed)
    a = ScalarVolume(g.normal(size=(9, 9, 9)))
    b = ScalarVolume(g.normal(size=(9, 9, 9)))
    cfg = SsimConfig(window=5, dynamic_range=4.0)
    assert ssim(a, b, cfg=cfg) == pytest.approx(ssim(b, a, cfg=cfg), abs=1e-13)
    assert ssim(a, b, cfg=cfg) <= 1.0


def test_ssim_errors():
    flat = ScalarVolume(np.ones((12, 12, 12)))
    with pytest.raises(DomainError):
        ssim(flat, flat)
    with pytest.raises(DomainError):
        ssim(flat, flat, sphere_mask((12, 12, 12), 3), SsimConfig(dynamic_range=1.0))
    with pytest.raises(DomainError):
        SsimConfig(window=4)


def test_line_profile_linear_is_exact():
    x, y, z = np.meshgrid(*(np.arange(6.0),) * 3, indexing="ij")
    vol = ScalarVolume(2 * x - y + 0.5 * z)
    dist, values = line_profile(vol, (0.0, 1.0, 0.5), (4.5, 3.0, 5.0), 7)
    pts = np.linspace([0.0, 1.0, 0.5], [4.5, 3.0, 5.0], 7)
    np.testing.assert_allclose(values, 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 2], atol=1e-12)
    assert dist[-1] == pytest.approx(np.linalg.norm([4.5, 2.0, 4.5]))
    with pytest.raises(StructuralError):
        line_profile(vol, (0, 0, 0), (6, 0, 0), 5)


def test_roi_table_and_report(pair):
    recon, truth = pair
    roi = sphere_mask(truth.dims, 3)
    rows = roi_table(recon, {"core": roi})
    assert rows[0]["label"] == "core"
    assert rows[0]["mean_ppb"] == pytest.approx(1000 * recon.data[roi.data].mean())
    report = evaluate(truth, truth, rois={"core": roi})
    doc = json.loads(report.to_json())
    assert doc["psnr"] == "identical" and doc["nrmse"] == 0.0
    assert doc["config"]["window"] == 11
