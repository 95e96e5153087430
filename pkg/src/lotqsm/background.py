"""RESHARP background field removal.

The spherical mean value (SMV) high-pass S = delta - ball removes harmonic
(background) fields wherever the ball fits inside the ROI. The local field
is the Tikhonov-regularised deconvolution

    argmin_f ||M_e S (f - total)||^2 + lambda ||f||^2

solved on the normal equations (S M_e S + lambda I) f = S M_e S total by
conjugate gradient, with M_e the mask eroded by the SMV radius.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from lotqsm.errors import ConvergenceError, DomainError, StructuralError
from lotqsm.volume import Mask, ScalarVolume, Unit, ball, erode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResharpConfig:
    smv_radius: int = 3
    tikhonov_lambda: float = 1e-3
    cg_tol: float = 1e-6
    cg_max_iter: int = 200

    def __post_init__(self):
        for name in ("smv_radius", "tikhonov_lambda", "cg_tol", "cg_max_iter"):
            if not getattr(self, name) > 0:
                raise DomainError(f"ResharpConfig.{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class SmvKernel:
    radius: int
    spectrum: np.ndarray

    @classmethod
    def create(cls, dims, radius: int) -> SmvKernel:
        dims = tuple(int(n) for n in dims)
        b = ball(radius).astype(np.float64)
        b /= b.sum()
        if any(n < b.shape[0] for n in dims):
            raise StructuralError(f"grid {dims} too small for an SMV ball of radius {radius}")
        r = b.shape[0] // 2
        kernel = np.zeros(dims)
        for off in zip(*np.nonzero(b)):
            idx = tuple((o - r) % n for o, n in zip(off, dims))
            kernel[idx] += b[off]
        spectrum = 1.0 - np.fft.fftn(kernel).real
        spectrum.setflags(write=False)
        return cls(radius, spectrum)

    def apply(self, data: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(self.spectrum * np.fft.fftn(data)).real


@dataclass
class CgResult:
    solution: np.ndarray
    iterations: int
    residual: float
    history: list


def conjugate_gradient(apply_a, b: np.ndarray, tol: float, max_iter: int) -> CgResult:
    """Plain CG from x0 = 0 for a symmetric positive definite operator."""
    x = np.zeros_like(b)
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return CgResult(x, 0, 0.0, [0.0])
    r = b.copy()
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    history = [1.0]
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        alpha = rs / float(np.vdot(p, ap).real)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r).real)
        rel = np.sqrt(rs_new) / b_norm
        history.append(rel)
        if rel <= tol:
            return CgResult(x, it, rel, history)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CgResult(x, max_iter, history[-1], history)


def resharp(
    total_field: ScalarVolume, mask: Mask, cfg: ResharpConfig | None = None, full_output: bool = False
):
    """Remove the background field from ``total_field`` (ppm) inside ``mask``.

    Returns ``(local_field, eroded_mask)``; the local field is zero outside
    the eroded mask. With ``full_output`` a third element carries the CG
    diagnostics.

    Raises
    ------
    DomainError
        If erosion by the SMV radius leaves no voxels.
    ConvergenceError
        If CG does not reach ``cfg.cg_tol`` within ``cfg.cg_max_iter``.
    """
    cfg = cfg or ResharpConfig()
    mask.check_dims(total_field.dims)
    eroded = erode(mask, cfg.smv_radius)
    if eroded.count == 0:
        raise DomainError(f"mask is empty after erosion by {cfg.smv_radius} voxels")
    smv = SmvKernel.create(total_field.dims, cfg.smv_radius)
    m = eroded.data.astype(np.float64)

    def normal_op(f):
        return smv.apply(m * smv.apply(f)) + cfg.tikhonov_lambda * f

    rhs = smv.apply(m * smv.apply(total_field.data))
    result = conjugate_gradient(normal_op, rhs, cfg.cg_tol, cfg.cg_max_iter)
    log.debug("resharp CG: %d iterations, residual %.3e", result.iterations, result.residual)
    if result.residual > cfg.cg_tol:
        raise ConvergenceError("RESHARP conjugate gradient did not converge", result.residual, result.iterations)
    local = total_field.like(np.where(eroded.data, result.solution, 0.0), Unit.PPM)
    if full_output:
        return local, eroded, result
    return local, eroded
