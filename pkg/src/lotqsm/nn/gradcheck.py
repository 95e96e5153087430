"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch import nn

from lotqsm.errors import DomainError


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_params_checked: int
    n_inputs_checked: int
    n_trainable: int


def _rel_error(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(
    module: nn.Module,
    inputs: torch.Tensor,
    epsilon: float = 1e-6,
    n_params: int = 100,
    n_inputs: int = 100,
    seed: int = 0,
    forward: Callable[[nn.Module, torch.Tensor], torch.Tensor] | None = None,
    tol: float = 1e-4,
) -> GradCheckResult:
    """Compare autograd gradients of an MSE loss with central differences.

    A random subset of ``n_params`` trainable scalars and ``n_inputs`` input
    elements (all of them when fewer exist) is perturbed by +-``epsilon``.
    The relative error is |g - fd| / max(|g|, |fd|, floor).

    Central differences cannot resolve gradients smaller than their rounding
    noise, about eps_mach * |loss| / epsilon. ``floor`` is that noise divided
    by ``tol``, so a gradient below the resolution passes at ``tol`` exactly
    when it agrees with the finite difference to within the noise.

    Both ``module`` and ``inputs`` must be float64.
    """
    if inputs.dtype != torch.float64 or any(p.dtype != torch.float64 for p in module.parameters()):
        raise DomainError("grad_check requires double precision module and inputs")
    forward = forward or (lambda m, x: m(x))
    rng = np.random.default_rng(seed)
    x = inputs.detach().clone().requires_grad_(True)
    with torch.no_grad():
        target = torch.from_numpy(rng.normal(size=tuple(forward(module, x).shape)))

    def loss_value() -> float:
        with torch.no_grad():
            return float(torch.mean((forward(module, x) - target) ** 2))

    module.zero_grad()
    loss = torch.mean((forward(module, x) - target) ** 2)
    loss.backward()
    floor = np.finfo(np.float64).eps * max(abs(float(loss.detach())), 1.0) / epsilon / tol

    params = [p for p in module.parameters() if p.requires_grad]
    flat = [(p, i) for p in params for i in range(p.numel())]
    picks = rng.choice(len(flat), size=min(n_params, len(flat)), replace=False) if flat else []
    in_picks = rng.choice(x.numel(), size=min(n_inputs, x.numel()), replace=False)
    worst = 0.0

    def probe(tensor: torch.Tensor, idx: int, analytic: float) -> float:
        view = tensor.data.view(-1)
        orig = float(view[idx])
        view[idx] = orig + epsilon
        up = loss_value()
        view[idx] = orig - epsilon
        down = loss_value()
        view[idx] = orig
        return _rel_error(analytic, (up - down) / (2 * epsilon), floor)

    for k in picks:
        p, i = flat[k]
        worst = max(worst, probe(p, i, float(p.grad.view(-1)[i])))
    for i in in_picks:
        worst = max(worst, probe(x, int(i), float(x.grad.view(-1)[i])))
    return GradCheckResult(worst, len(picks), len(in_picks), sum(p.numel() for p in params))
