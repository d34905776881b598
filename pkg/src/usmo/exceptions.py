"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class USMOError(Exception):
    exit_code = 1


class InputError(USMOError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 1


class ParseError(InputError):
    """A data or model file could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class ConfigurationError(USMOError, ValueError):
    """Hyperparameters outside their valid range, or an infeasible dual."""

    exit_code = 2


class InternalStateError(USMOError, RuntimeError):
    """The solver reached a state its invariants rule out."""

    exit_code = 1


class BudgetExceededError(USMOError, RuntimeError):
    """The solver ran out of full scans before reaching tau-optimality.

    ``state`` holds the best iterate reached, ``trace`` the iterations so far.
    """

    exit_code = 3

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace
