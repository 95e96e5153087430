"""Strict pipeline configuration.

One JSON document configures every stage. Unknown keys and invalid values
are all reported together, each with its dotted path, so a typo can never
silently fall back to a default.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, ValidationError

from lotqsm.ablate import PhantomConfig
from lotqsm.background import ResharpConfig
from lotqsm.datagen import CropSpec, DatasetConfig, PathologyConfig, TeSampler, config_hash
from lotqsm.dipole import DEFAULT_TKD_THRESHOLD
from lotqsm.errors import StructuralError
from lotqsm.metrics import SsimConfig
from lotqsm.nn.layers import UnetConfig
from lotqsm.nn.train import TrainConfig

log = logging.getLogger(__name__)

STRICT = ConfigDict(extra="forbid", frozen=True)

# the domain dataclasses validate themselves in __post_init__; this makes
# pydantic reject unknown keys on them as well
for _cls in (ResharpConfig, PathologyConfig, CropSpec, TeSampler, UnetConfig, TrainConfig,
             SsimConfig, PhantomConfig, DatasetConfig):
    _cls.__pydantic_config__ = STRICT


class DatasetSection(BaseModel):
    model_config = STRICT
    n_samples: int = 100
    mix: tuple[float, float] = (0.6, 0.4)
    patch_dims: tuple[int, int, int] = (16, 16, 16)
    b0: float = 3.0
    noise_snr: float | None = None
    dtype: Literal["float32", "float64"] = "float64"


class PipelineConfig(BaseModel):
    model_config = STRICT
    seed: int = 0
    stencil: Literal["canonical"] = "canonical"
    tkd_threshold: float = DEFAULT_TKD_THRESHOLD
    resharp: ResharpConfig = ResharpConfig()
    pathology: PathologyConfig = PathologyConfig()
    crop: CropSpec = CropSpec()
    te_sampler: TeSampler = TeSampler()
    dataset: DatasetSection = DatasetSection()
    unet: UnetConfig = UnetConfig()
    train: TrainConfig = TrainConfig()
    ssim: SsimConfig = SsimConfig()
    phantom: PhantomConfig = PhantomConfig()

    def dataset_config(self, n_samples: int | None = None) -> DatasetConfig:
        d = self.dataset
        return DatasetConfig(
            n_samples=n_samples or d.n_samples, mix=d.mix, seed=self.seed, patch_dims=d.patch_dims,
            b0=d.b0, noise_snr=d.noise_snr, dtype=d.dtype, te_sampler=self.te_sampler,
            pathology=self.pathology,
        )

    def to_dict(self) -> dict:
        return json.loads(self.model_dump_json())

    def hash(self) -> str:
        return config_hash(self.to_dict())


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = "unknown key" if e["type"] in ("extra_forbidden", "unexpected_keyword_argument") else e["msg"]
        lines.append(f"  {path}: {msg}")
    return "invalid configuration:\n" + "\n".join(lines)


def load_config(source=None, overrides: dict | None = None) -> PipelineConfig:
    """Parse a config file (or dict), apply dotted-key ``overrides`` and validate.

    Raises
    ------
    StructuralError
        Listing every unknown key and invalid value.
    """
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = json.loads(json.dumps(source))
    else:
        path = Path(source)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise StructuralError(f"{path}: not valid JSON: {exc}") from exc
    for key, value in (overrides or {}).items():
        node = doc
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    try:
        cfg = PipelineConfig.model_validate(doc)
    except ValidationError as exc:
        raise StructuralError(_format(exc)) from None
    log.info("resolved config hash %s", cfg.hash())
    return cfg
