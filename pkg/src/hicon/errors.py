"""Exception hierarchy shared by all pipeline stages."""


class HiconError(Exception):
    """Base class for every error raised by this package."""

    #: module name reported by the CLI when a numeric stage fails
    stage = "hicon"


class ConfigError(HiconError):
    stage = "config"


class GeometryError(ConfigError):
    stage = "mesh"


class MeshError(HiconError):
    stage = "mesh"


class AssemblyError(HiconError):
    stage = "fem_assembly"


class ConvergenceError(HiconError):
    stage = "eigensolver"


class FactorizationError(HiconError):
    stage = "eigensolver"


class SizeError(HiconError):
    stage = "eigensolver"


class SolveError(HiconError):
    stage = "macro_tensor"


class PoleError(HiconError):
    stage = "zhikov_function"


class GridError(HiconError):
    stage = "zhikov_function"


class DegenerateError(HiconError):
    stage = "dispersion"
