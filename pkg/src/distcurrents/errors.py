"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(RuntimeError):
    """The input cannot be evaluated, e.g. every integrand node is masked."""


class DegenerateLevelError(DegenerateInputError):
    """A level value stays on the sample values after the perturbation budget is spent."""
