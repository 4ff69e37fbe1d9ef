"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the model is defined."""


class InfiniteDelayError(DomainError):
    """No stimulated current flows, so the junction capacitor never charges."""


class ConvergenceError(RuntimeError):
    """The fixed-step integrator exhausted its step budget."""


class DataError(ValueError):
    """Malformed or inconsistent input data (event files, frames, CSV)."""


class ConfigError(ValueError):
    """Invalid run configuration.

    ``line`` is the 1-based line number in the config file when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
