"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI.
"""


class SubspaceError(Exception):
    code = "error"


class DimensionError(SubspaceError, ValueError):
    code = "dimension"


class NumericError(SubspaceError, ArithmeticError):
    code = "numeric"


class NonNegativityError(SubspaceError, ValueError):
    code = "nonnegativity"


class LabelMismatchError(SubspaceError, ValueError):
    code = "label_mismatch"


class LabelError(SubspaceError, ValueError):
    code = "label"


class ParseError(SubspaceError, ValueError):
    code = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientSamplesError(SubspaceError, ValueError):
    code = "insufficient_samples"


class ConfigError(SubspaceError, ValueError):
    code = "config"
