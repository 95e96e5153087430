"""LoT-Unet networks on top of torch autograd."""

from lotqsm.nn.checkpoint import NetParams, architecture_fingerprint
from lotqsm.nn.gradcheck import GradCheckResult, grad_check
from lotqsm.nn.infer import infer, predict_echo
from lotqsm.nn.layers import LotLayer, LotUnet, UNet3D, UnetConfig, init_weights, layer_counts, wrap_tensor
from lotqsm.nn.train import TrainConfig, TrainResult, train

__all__ = [
    "GradCheckResult", "LotLayer", "LotUnet", "NetParams", "TrainConfig", "TrainResult", "UNet3D",
    "UnetConfig", "architecture_fingerprint", "grad_check", "infer", "init_weights", "layer_counts",
    "predict_echo", "train", "wrap_tensor",
]
