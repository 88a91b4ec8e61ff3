"""Solar PV array mapping in aerial imagery.

Patch-level CNNs (a VGG-style classifier and an encoder-decoder segmenter),
dense tiled inference with Gaussian-weighted stitching, connected-component
object extraction, and pixel/object precision-recall scoring.
"""

__version__ = "0.1.0"

from .errors import NumericalError, ShapeError, ValidationError

__all__ = ["NumericalError", "ShapeError", "ValidationError", "__version__"]
