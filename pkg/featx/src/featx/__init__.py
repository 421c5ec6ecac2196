"""Deep-feature distance extraction into FDX archives."""

__version__ = "0.1.0"

from featx.errors import (BackboneError, FeatxError, ImageDecodeError,
                          ManifestError)

__all__ = [
    "BackboneError",
    "FeatxError",
    "ImageDecodeError",
    "ManifestError",
    "__version__",
]
