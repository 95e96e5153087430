"""LoT layer and the residual 3D U-Net."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from lotqsm.errors import DomainError, StructuralError
from lotqsm.phase import _canonical_weights

TWO_PI = 2.0 * math.pi
LEARNABLE_KERNELS = 16


def wrap_tensor(x: torch.Tensor) -> torch.Tensor:
    """Fold into (-pi, pi]; same arithmetic as ``phase.wrap_array``."""
    out = x - TWO_PI * torch.round(x / TWO_PI)
    out = torch.where(out <= -math.pi, out + TWO_PI, out)
    return torch.where(out > math.pi, out - TWO_PI, out)


class LotLayer(nn.Module):
    """Trigonometric Laplacian of wrapped phase, divided by B0*TE.

    ``mode="fixed"`` holds the canonical stencil as a frozen buffer (one
    output channel). ``mode="learnable"`` trains 16 kernels, each started
    from the canonical stencil plus N(0, ``init_std``) noise.
    """

    def __init__(self, mode: str = "fixed", init_std: float = 0.01, generator: torch.Generator | None = None):
        super().__init__()
        if mode not in ("fixed", "learnable"):
            raise DomainError(f"LoT mode must be 'fixed' or 'learnable', got {mode!r}")
        self.mode = mode
        base = torch.from_numpy(_canonical_weights()).reshape(1, 1, 3, 3, 3)
        if mode == "fixed":
            self.register_buffer("kernels", base.clone())
        else:
            w = base.repeat(LEARNABLE_KERNELS, 1, 1, 1, 1)
            w = w + init_std * torch.randn(w.shape, generator=generator, dtype=w.dtype)
            self.kernels = nn.Parameter(w)

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    def forward(self, phase: torch.Tensor, b0, te) -> torch.Tensor:
        if phase.ndim != 5 or phase.shape[1] != 1:
            raise StructuralError(f"LoT layer expects (batch, 1, nx, ny, nz) input, got {tuple(phase.shape)}")
        p = wrap_tensor(phase)
        s, c = torch.sin(p), torch.cos(p)
        k = self.kernels.to(p.dtype)
        num = c * F.conv3d(s, k, padding=1) - s * F.conv3d(c, k, padding=1)
        scale = torch.as_tensor(b0, dtype=p.dtype) * torch.as_tensor(te, dtype=p.dtype)
        return num / scale.reshape(-1, 1, 1, 1, 1)


@dataclass(frozen=True)
class UnetConfig:
    depth: int = 4
    base_channels: int = 8
    in_channels: int = 1
    lot_mode: str = "fixed"

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1 or self.in_channels < 1:
            raise DomainError(f"depth, base_channels and in_channels must be positive: {self}")

    @classmethod
    def full(cls) -> UnetConfig:
        """Full-size network: depth 4 with 32 base channels."""
        return cls(depth=4, base_channels=32)

    @classmethod
    def desk(cls) -> UnetConfig:
        return cls(depth=2, base_channels=8)

    def to_dict(self) -> dict:
        return asdict(self)


def _conv_bn_relu(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv3d(cin, cout, 3, padding=1), nn.BatchNorm3d(cout), nn.ReLU())


def _double_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(_conv_bn_relu(cin, cout), _conv_bn_relu(cout, cout))


class UNet3D(nn.Module):
    """Residual 3D U-Net: output = mean over input channels + core(x).

    Each level has two conv-BN-ReLU blocks; every up-sampling transposed
    convolution is also followed by BN and ReLU. For depth d this gives
    4d + 2 3x3x3 convolutions and 5d + 2 batch-norm / ReLU layers.
    """

    def __init__(self, cfg: UnetConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or UnetConfig()
        widths = [cfg.base_channels * 2**i for i in range(cfg.depth + 1)]
        self.encoders = nn.ModuleList()
        cin = cfg.in_channels
        for w in widths[:-1]:
            self.encoders.append(_double_conv(cin, w))
            cin = w
        self.pool = nn.MaxPool3d(2)
        self.bottleneck = _double_conv(widths[-2], widths[-1])
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for w_hi, w in zip(widths[:0:-1], widths[-2::-1]):
            self.ups.append(nn.Sequential(nn.ConvTranspose3d(w_hi, w, 2, stride=2), nn.BatchNorm3d(w), nn.ReLU()))
            self.decoders.append(_double_conv(2 * w, w))
        self.head = nn.Conv3d(widths[0], 1, 1)

    def check_dims(self, spatial) -> None:
        f = 2**self.cfg.depth
        if any(n % f for n in spatial):
            padded = tuple(-(-n // f) * f for n in spatial)
            raise StructuralError(
                f"spatial dims {tuple(spatial)} must be divisible by {f} for depth {self.cfg.depth}; "
                f"zero-pad to {padded}"
            )

    def core(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.ups, self.decoders, reversed(skips)):
            x = dec(torch.cat([up(x), skip], dim=1))
        return self.head(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_dims(x.shape[2:])
        return x.mean(dim=1, keepdim=True) + self.core(x)


def layer_counts(model: nn.Module) -> dict[str, int]:
    """Count layer instances by kind (concatenations are counted per forward: one per decoder)."""
    counts = {"conv3": 0, "maxpool": 0, "tconv": 0, "batchnorm": 0, "relu": 0, "concat": 0, "conv1": 0}
    for m in model.modules():
        if isinstance(m, nn.Conv3d):
            counts["conv3" if m.kernel_size == (3, 3, 3) else "conv1"] += 1
        elif isinstance(m, nn.ConvTranspose3d):
            counts["tconv"] += 1
        elif isinstance(m, nn.BatchNorm3d):
            counts["batchnorm"] += 1
        elif isinstance(m, nn.ReLU):
            counts["relu"] += 1
        elif isinstance(m, UNet3D):
            # the single shared pooling module is applied once per level
            counts["maxpool"] += m.cfg.depth
            counts["concat"] += len(m.decoders)
    return counts


def init_weights(model: nn.Module, std: float = 0.01, generator: torch.Generator | None = None) -> None:
    """Conv weights ~ N(0, std), biases 0, batch-norm at identity."""
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * std)
                m.bias.zero_()
            elif isinstance(m, nn.BatchNorm3d):
                m.reset_parameters()
                m.reset_running_stats()


class LotUnet(nn.Module):
    """LoT layer followed by the residual U-Net (one network per target)."""

    def __init__(self, cfg: UnetConfig | None = None):
        super().__init__()
        cfg = cfg or UnetConfig.desk()
        self.lot = LotLayer(cfg.lot_mode)
        if cfg.in_channels != self.lot.out_channels:
            cfg = UnetConfig(cfg.depth, cfg.base_channels, self.lot.out_channels, cfg.lot_mode)
        self.cfg = cfg
        self.unet = UNet3D(cfg)

    def forward(self, phase: torch.Tensor, b0, te) -> torch.Tensor:
        return self.unet(self.lot(phase, b0, te))

    def trainable_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

