"""unhal: metadata-assisted recovery of unhallucinated camera images.

A per-modality convolutional encoder plus a per-image finetuned coordinate
MLP recover the pre-enhancement version of a camera image; the model weights
travel inside the image file as a compact metadata container.
"""

from . import ops  # noqa: F401  (binds Tensor operators)
from .tensor import Tensor, no_grad  # noqa: F401

__version__ = "0.1.0"
