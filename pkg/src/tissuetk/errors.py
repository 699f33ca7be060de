"""Exception types raised across the toolkit."""


class TissueToolkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(TissueToolkitError, ValueError):
    """A manifest, sidecar, params file or CSV could not be parsed."""


class DimensionMismatch(TissueToolkitError, ValueError):
    pass


class ConstantField(TissueToolkitError, ValueError):
    """All samples are equal, so no threshold separates two classes."""


class MissingLevel(TissueToolkitError, FileNotFoundError):
    pass


class InconsistentPyramid(TissueToolkitError, ValueError):
    pass


class TargetFinerThanSource(TissueToolkitError, ValueError):
    """Requested resolution is finer than the finest pyramid level."""


class FootprintOutsideMask(TissueToolkitError, ValueError):
    pass


class RecordCorrupted(TissueToolkitError, ValueError):
    """A record file failed length or CRC validation."""


class SlideSetMismatch(TissueToolkitError, ValueError):
    pass


class EmptyInput(TissueToolkitError, ValueError):
    pass
