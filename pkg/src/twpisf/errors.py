"""Exception hierarchy and the CLI exit codes attached to each class."""


class TwpIsfError(Exception):
    exit_code = 1


class ConfigError(TwpIsfError, ValueError):
    """Invalid configuration or inconsistent setup.

    ``problems`` holds every issue found, so a config parser can report all of
    them at once instead of stopping at the first.
    """

    exit_code = 2

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else [message]
        super().__init__(message)


class DomainError(ConfigError):
    """Argument outside the mathematical domain (non-positive mass, ...)."""


class UnitError(ConfigError):
    pass


class UsageError(ConfigError):
    pass


class NumericError(TwpIsfError, ArithmeticError):
    exit_code = 3


class TraceIOError(TwpIsfError, OSError):
    exit_code = 4
