"""Exception hierarchy shared by all modules.

Each class carries the process exit code the CLI reports for it.
"""


class DCSIError(Exception):
    exit_code = 1


class ContractError(DCSIError, ValueError):
    """An input violates a documented precondition."""

    exit_code = 2


class InvalidDimensionError(ContractError):
    pass


class ResourceCapError(DCSIError):
    """Requested codebook would exceed the configured size cap."""

    exit_code = 3


class NumericalDegeneracyError(DCSIError, ArithmeticError):
    exit_code = 4


class SingularBasisError(NumericalDegeneracyError):
    pass


class SingularMatrixError(NumericalDegeneracyError):
    pass


class DegenerateProjectionError(NumericalDegeneracyError):
    pass
