"""Per-echo LoT-Unet inference with magnitude-weighted echo combination."""

from __future__ import annotations

import numpy as np
import torch

from lotqsm.dipole import EchoSeries, echo_fit
from lotqsm.errors import LoadError
from lotqsm.nn.checkpoint import NetParams
from lotqsm.nn.layers import LotUnet
from lotqsm.phase import wrap_array
from lotqsm.volume import ScalarVolume, Unit


def predict_echo(model: LotUnet, phase: np.ndarray, b0: float, te: float) -> np.ndarray:
    """One forward pass on a 3D phase array.

    The LoT layer sees the original grid, so its output equals ``phase.lot``;
    the LoT map is then zero-padded to the U-Net's divisibility and the
    result cropped back.
    """
    dtype = next(model.parameters()).dtype
    # re-wrap in numpy so any exact 2*pi*k offset gives identical network input
    x = torch.from_numpy(wrap_array(phase)[None, None]).to(dtype)
    with torch.no_grad():
        feats = model.lot(x, torch.tensor([b0], dtype=dtype), torch.tensor([te], dtype=dtype))
        f = 2**model.cfg.depth
        pads = [(-n) % f for n in phase.shape]
        feats = torch.nn.functional.pad(feats, (0, pads[2], 0, pads[1], 0, pads[0]))
        out = model.unet(feats)
    nx, ny, nz = phase.shape
    return out[0, 0, :nx, :ny, :nz].double().numpy()


def infer(echoes: EchoSeries, params: NetParams | LotUnet, target: str | None = None) -> ScalarVolume:
    """Apply the network to each echo and combine them.

    Per echo the output is TE-independent (ppm); multi-echo inputs are
    combined with ``echo_fit`` on Y_i = output_i * TE_i, which reduces to a
    magnitude*TE^2 weighted mean of the per-echo outputs.
    """
    if isinstance(params, NetParams):
        if target is not None and params.target not in (None, target):
            raise LoadError(f"checkpoint was trained for {params.target!r}, not {target!r}")
        model = params.build()
    else:
        model = params
    model.eval()
    acq = echoes.params
    outputs = [predict_echo(model, ph.data, acq.b0, te) for ph, te in zip(echoes.phases, acq.te_list)]
    like = echoes.phases[0]
    if len(outputs) == 1:
        return like.like(outputs[0], Unit.PPM)
    ys = [like.like(o * te) for o, te in zip(outputs, acq.te_list)]
    fit = echo_fit(ys, echoes.magnitudes, acq.te_list)
    return fit.like(fit.data, Unit.PPM)
