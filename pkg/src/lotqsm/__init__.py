"""Single-step QSM from raw wrapped phase via Laplacian-of-trigonometric layers.

Also contains the classical multi-step baseline (Laplacian unwrapping,
RESHARP background removal, TKD inversion) and a synthetic data pipeline.
"""

from lotqsm.volume import ComplexVolume, Mask, ScalarVolume, Unit

__version__ = "0.1.0"

__all__ = ["ComplexVolume", "Mask", "ScalarVolume", "Unit", "__version__"]
