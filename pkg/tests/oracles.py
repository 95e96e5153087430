"""Slow, independent reference implementations used as test oracles."""

import itertools

import numpy as np


def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def direct_dft3(x: np.ndarray) -> np.ndarray:
    """3D DFT by explicit matrix products along each axis (no FFT)."""
    out = x.astype(np.complex128)
    for axis, n in enumerate(x.shape):
        out = np.moveaxis(np.tensordot(dft_matrix(n), np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


def direct_idft3(x: np.ndarray) -> np.ndarray:
    out = x.astype(np.complex128)
    for axis, n in enumerate(x.shape):
        out = np.moveaxis(np.tensordot(dft_matrix(n).conj() / n, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


def dipole_direct(dims, b=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Dipole kernel written out voxel by voxel."""
    out = np.zeros(dims)
    for idx in itertools.product(*(range(n) for n in dims)):
        k = np.array([(i if i < (n + 1) // 2 else i - n) / n for i, n in zip(idx, dims)])
        k2 = k @ k
        out[idx] = 0.0 if k2 == 0 else 1 / 3 - (k @ np.asarray(b)) ** 2 / k2
    return out


def erode_brute(mask: np.ndarray, radius: float) -> np.ndarray:
    """A voxel survives if every grid point within ``radius`` (outside grid = background) is set."""
    r = int(np.floor(radius))
    offs = [o for o in itertools.product(range(-r, r + 1), repeat=3) if sum(v * v for v in o) <= radius**2 + 1e-9]
    out = np.zeros_like(mask, dtype=bool)
    for idx in zip(*np.nonzero(mask)):
        ok = True
        for o in offs:
            p = tuple(i + d for i, d in zip(idx, o))
            if any(q < 0 or q >= n for q, n in zip(p, mask.shape)) or not mask[p]:
                ok = False
                break
        out[idx] = ok
    return out


def stencil_loop(data: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Zero-padded 27-point correlation with explicit loops over offsets."""
    padded = np.pad(data, 1)
    out = np.zeros_like(data, dtype=np.float64)
    nx, ny, nz = data.shape
    for i, j, k in itertools.product(range(3), repeat=3):
        out += weights[i, j, k] * padded[i : i + nx, j : j + ny, k : k + nz]
    return out


def weighted_ls_dense(y: np.ndarray, w: np.ndarray, te: np.ndarray) -> np.ndarray:
    """Per-voxel slope through the origin from the normal equations of a dense design."""
    n_echo = len(te)
    flat_y = y.reshape(n_echo, -1)
    flat_w = w.reshape(n_echo, -1)
    out = np.zeros(flat_y.shape[1])
    A = te.reshape(-1, 1)
    for v in range(flat_y.shape[1]):
        W = np.diag(flat_w[:, v])
        lhs = A.T @ W @ A
        if lhs[0, 0] == 0:
            continue
        out[v] = np.linalg.solve(lhs, A.T @ W @ flat_y[:, v])[0]
    return out.reshape(y.shape[1:])


def ssim_window_direct(x, y, centre, window, sigma, c1, c2):
    """SSIM at one centre from explicitly weighted window statistics."""
    h = window // 2
    ax = np.arange(-h, h + 1)
    g = np.exp(-(ax**2) / (2 * sigma**2))
    g /= g.sum()
    w = g[:, None, None] * g[None, :, None] * g[None, None, :]
    sl = tuple(slice(c - h, c + h + 1) for c in centre)
    a, b = x[sl], y[sl]
    mx, my = (w * a).sum(), (w * b).sum()
    vx = (w * (a - mx) ** 2).sum()
    vy = (w * (b - my) ** 2).sum()
    cxy = (w * (a - mx) * (b - my)).sum()
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))


def smooth_phase(n: int, peak: float) -> np.ndarray:
    """Band-limited phase: product of lowest-frequency cosines, max value ``peak``."""
    x, y, z = np.meshgrid(*(np.arange(n, dtype=float),) * 3, indexing="ij")
    f = (1 + np.cos(2 * np.pi * x / n)) * (1 + np.cos(2 * np.pi * y / n)) * (1 + 0.5 * np.cos(2 * np.pi * z / n))
    return peak * f / f.max()
