"""Exception hierarchy shared by every module."""


class GhostImagingError(ValueError):
    """Base class for all errors raised by asvdgi."""


class DimensionMismatch(GhostImagingError):
    pass


class DegenerateInput(GhostImagingError):
    """Constant image/pattern/readings where variation is required."""


class InvalidShape(GhostImagingError):
    pass


class RankDeficient(GhostImagingError):
    pass


class MaskMismatch(GhostImagingError):
    pass


class IndivisibleGrid(GhostImagingError):
    pass


class KindMismatch(GhostImagingError):
    pass


class EmptyForeground(GhostImagingError):
    """No superpixel falls inside the selection interval."""


class InvalidFactor(GhostImagingError):
    pass


class ConfigError(GhostImagingError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
