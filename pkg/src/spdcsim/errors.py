"""Exception types shared by the engine, the oracle and the CLI."""


class InvalidArgument(ValueError):
    """A parameter is out of range or structurally inconsistent."""


class NumericalDegeneracy(ArithmeticError):
    """A matrix that must be positive definite is not, or a probability left [0, 1]."""


class UndefinedVisibility(ArithmeticError):
    """Visibility denominator vanishes (e.g. mu = 0 without dark counts)."""
