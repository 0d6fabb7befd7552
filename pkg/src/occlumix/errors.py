"""Exception taxonomy shared by the library and the command line tool."""


class OcclumixError(Exception):
    """Base class for every error raised by this package."""


class InputValidationError(OcclumixError, ValueError):
    """Malformed or inconsistent input: bad shapes, bad files, unknown ids."""


class DegenerateInputError(OcclumixError, ValueError):
    """Structurally valid input on which the requested quantity is undefined,
    e.g. a masked co-occurrence count of zero or an empty composite region."""


class NumericalError(OcclumixError, ArithmeticError):
    """Numerical failure: non-finite intermediates or a solver that did not
    converge."""
