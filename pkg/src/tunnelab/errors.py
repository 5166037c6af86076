"""Exception types shared across the package."""


class TunnelabError(Exception):
    """Base class for all package-specific failures."""


class PrecisionError(TunnelabError):
    """The working precision is insufficient for the requested computation."""


class GridError(TunnelabError):
    """A sampling grid fails a coverage, spacing, or aliasing requirement."""


class ConvergenceError(TunnelabError):
    """An iterative refinement (panel doubling, window extension) did not converge."""


class ConfigError(TunnelabError):
    """An experiment configuration is malformed or violates a precondition."""
