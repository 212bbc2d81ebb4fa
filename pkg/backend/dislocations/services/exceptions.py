"""Error hierarchy of the laboratory and the CLI exit codes they map to."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_ACCEPTANCE = 4


class DislocationLabError(Exception):
    """Base class for every error raised by the services"""
    exit_code = EXIT_CONVERGENCE


class ArgumentError(DislocationLabError, ValueError):
    """Invalid argument passed to an operation"""
    exit_code = EXIT_CONFIG


class ConfigError(DislocationLabError):
    """Configuration rejected; carries the offending key path"""
    exit_code = EXIT_CONFIG

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class NumericError(DislocationLabError):
    """Non-finite values, or a numerical integration that failed"""


class ConvergenceError(DislocationLabError):
    """Iteration budget exhausted before reaching the tolerance"""

    def __init__(self, message, last_residual=None):
        self.last_residual = last_residual
        if last_residual is not None:
            message = f"{message} (last residual {last_residual:.3e})"
        super().__init__(message)


class SolverError(DislocationLabError):
    """Structural failure of a solver (monotonicity loss, singular system)"""


class SingularityError(DislocationLabError):
    """Two particles occupy the same position"""


class NearCollisionError(DislocationLabError):
    """Particle gap dropped below the configured floor"""

    def __init__(self, time, gap, floor):
        self.time = time
        self.gap = gap
        self.floor = floor
        super().__init__(f"near collision at t={time:.6g}: gap {gap:.3e} below floor {floor:.3e}")


class InstabilityError(DislocationLabError):
    """Evolution left the maximum-principle sanity band"""

    def __init__(self, dt, max_value, time=None):
        self.dt = dt
        self.max_value = max_value
        self.time = time
        super().__init__(f"instability at t={time}: max |v| = {max_value:.6g} with dt = {dt:.3e}")


class TopologyError(DislocationLabError):
    """Number of half-level crossings differs from the number of layers"""

    def __init__(self, count, expected, epsilon=None, time=None):
        self.count = count
        self.expected = expected
        super().__init__(
            f"found {count} half-level crossings, expected {expected} "
            f"(epsilon={epsilon}, t={time}); layers merged or window too small"
        )


class ProfileFormatError(DislocationLabError):
    """Archive missing, truncated or malformed"""
    exit_code = EXIT_CONFIG


class UnsupportedVersionError(ProfileFormatError):
    """Archive written with a format version this tool cannot read"""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"unsupported profile format_version {found} (this tool reads {expected})")


class AcceptanceError(DislocationLabError):
    """A configured acceptance predicate failed"""
    exit_code = EXIT_ACCEPTANCE
