"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command line front end can map
failures onto process exit statuses without inspecting messages.
"""


class DecodeToolkitError(Exception):
    exit_code = 1


class ConfigurationError(DecodeToolkitError):
    """Inconsistent user configuration (unknown words, bad flags)."""


class ValidationError(DecodeToolkitError):
    """Data violates a documented invariant."""


class FormatError(ValidationError):
    """A binary or text file does not follow its declared layout."""


class NumericError(DecodeToolkitError):
    exit_code = 3


class DecodeError(NumericError):
    """No path survives up to some frame."""

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class CapacityError(DecodeToolkitError):
    exit_code = 4
