class FeatxError(Exception):
    """Base class for extraction failures."""


class ManifestError(FeatxError):
    """Pair manifest is malformed or violates its invariants."""


class ImageDecodeError(FeatxError):
    """An image file could not be decoded."""


class BackboneError(FeatxError):
    """Backbone or linear weights are missing or do not fit the model."""
