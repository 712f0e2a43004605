"""Exception types shared across the package."""


class SpagentError(Exception):
    pass


class DegeneratePoint(SpagentError, ValueError):
    """Tangent point (or plane distance) too close to the origin."""


class ConfigError(SpagentError, ValueError):
    pass


class FormatError(SpagentError, ValueError):
    """Bad magic, version, or truncated payload in one of our binary files."""


class DimensionMismatch(SpagentError, ValueError):
    pass


class ZeroVariance(SpagentError, ValueError):
    pass


class IndivisibleFactor(SpagentError, ValueError):
    pass


class EpisodeFinished(SpagentError, RuntimeError):
    pass


class ShapeMismatch(SpagentError, ValueError):
    pass


class InsufficientData(SpagentError, ValueError):
    pass


class EmptyDemoSet(SpagentError, ValueError):
    pass
