"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class DegreeSpecError(ValueError):
    """A degree distribution string could not be parsed.

    ``position`` is the character offset at which parsing failed.
    """

    def __init__(self, message, position=0):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class InfeasibleSchemeError(RuntimeError):
    """A matching scheme cannot be built for the given instance."""


class UnsupportedDimensionError(ValueError):
    pass


class FormatError(ValueError):
    """A CSV/JSON artifact does not follow the expected layout."""
