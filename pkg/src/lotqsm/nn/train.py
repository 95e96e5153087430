"""Adam training with a staged learning rate and complex-noise augmentation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch

from lotqsm.datagen import TrainingSample, config_hash
from lotqsm.errors import DomainError, TrainingDivergedError
from lotqsm.nn.checkpoint import TARGETS, NetParams
from lotqsm.nn.layers import LotUnet, UnetConfig, init_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch: int = 4
    lr: tuple[float, float, float] = (1e-3, 1e-4, 1e-5)
    # fractions of the run after which the next learning rate applies
    boundaries: tuple[float, float] = (0.5, 0.8)
    init_std: float = 0.01
    noisy_fraction: float = 0.2
    snr_range: tuple[float, float] = (10.0, 80.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr", tuple(self.lr))
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        object.__setattr__(self, "snr_range", tuple(self.snr_range))
        if self.epochs < 1 or self.batch < 1:
            raise DomainError("epochs and batch must be positive")
        if not 0 < self.boundaries[0] <= self.boundaries[1] <= 1:
            raise DomainError(f"schedule boundaries must be ordered fractions, got {self.boundaries}")
        if not 0.0 <= self.noisy_fraction <= 1.0:
            raise DomainError(f"noisy_fraction must lie in [0, 1], got {self.noisy_fraction}")
        if not 0 < self.snr_range[0] <= self.snr_range[1]:
            raise DomainError(f"snr_range must be positive and ordered, got {self.snr_range}")

    @classmethod
    def desk(cls, epochs: int = 500, **kw) -> TrainConfig:
        """Small-data preset: same staging, every rate 10x higher.

        A desk run takes a few hundred optimizer steps instead of tens of
        thousands, and at 1e-3 the network cannot grow its output scale fast
        enough to cancel the residual LoT input within that budget.
        """
        kw.setdefault("lr", (1e-2, 1e-3, 1e-4))
        return cls(epochs=epochs, **kw)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch`` (1-50 / 51-80 / 81-100 for 100 epochs)."""
        if epoch <= round(self.boundaries[0] * self.epochs):
            return self.lr[0]
        if epoch <= round(self.boundaries[1] * self.epochs):
            return self.lr[1]
        return self.lr[2]


@dataclass
class TrainResult:
    params: NetParams
    losses: list[float] = field(default_factory=list)
    noisy_batches: int = 0


def _stack(samples: Sequence[TrainingSample], target: str):
    phase = np.stack([s.phase_w.data for s in samples])[:, None]
    mag = np.stack([s.magnitude.data for s in samples])[:, None]
    label = np.stack([(s.local_field if target == "iqfm" else s.chi).data for s in samples])[:, None]
    te = np.array([s.te for s in samples])
    b0 = np.array([s.b0 for s in samples])
    return phase, mag, label, te, b0


def noise_block(phase: np.ndarray, mag: np.ndarray, snr: float, rng: np.random.Generator) -> np.ndarray:
    """Add complex Gaussian noise per sample (sigma = mean magnitude / snr); returns the noisy phase."""
    out = np.empty_like(phase)
    for i in range(phase.shape[0]):
        sigma = float(mag[i].mean()) / snr
        z = mag[i] * np.exp(1j * phase[i])
        z = z + rng.normal(0.0, sigma, z.shape) + 1j * rng.normal(0.0, sigma, z.shape)
        out[i] = np.angle(z)
    return out


def train(
    samples: Sequence[TrainingSample],
    target: str = "iqsm",
    cfg: TrainConfig | None = None,
    unet: UnetConfig | None = None,
) -> TrainResult:
    """Train a LoT-Unet on ``samples`` with MSE loss against the chosen label.

    ``target="iqfm"`` learns the local field, ``"iqsm"`` the susceptibility.
    Each mini-batch is replaced by its noisy version with probability
    ``cfg.noisy_fraction``; the SNR is drawn uniformly from ``cfg.snr_range``.
    Runs single-threaded so the result is a pure function of the seed.
    """
    cfg = cfg or TrainConfig()
    unet = unet or UnetConfig.desk()
    if target not in TARGETS:
        raise DomainError(f"target must be one of {TARGETS}, got {target!r}")
    if not samples:
        raise DomainError("training set is empty")
    torch.set_num_threads(1)
    gen = torch.Generator().manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    model = LotUnet(unet)
    init_weights(model.unet, cfg.init_std, gen)
    opt = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=cfg.lr[0])

    phase, mag, label, te, b0 = _stack(samples, target)
    n = len(samples)
    losses, noisy = [], 0
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr_at(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            p = phase[idx]
            if cfg.noisy_fraction > 0 and rng.random() < cfg.noisy_fraction:
                p = noise_block(p, mag[idx], rng.uniform(*cfg.snr_range), rng)
                noisy += 1
            out = model(torch.from_numpy(p).float(), torch.from_numpy(b0[idx]).float(),
                        torch.from_numpy(te[idx]).float())
            loss = torch.mean((out - torch.from_numpy(label[idx]).float()) ** 2)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {float(loss)} at epoch {epoch}, batch starting {start}, lr {lr:g}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        losses.append(total / n)
        log.debug("epoch %d lr %.0e loss %.6g", epoch, lr, losses[-1])

    provenance = {
        "target": target,
        "epochs": cfg.epochs,
        "train_config": asdict(cfg),
        "config_hash": config_hash({"train": asdict(cfg), "unet": unet.to_dict(), "target": target}),
        "final_loss": losses[-1],
    }
    return TrainResult(NetParams.from_model(model, provenance), losses, noisy)
