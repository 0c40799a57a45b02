"""Shared exception types."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class ContractError(ValueError):
    """An operation was used outside its contract (wrong mode, bad call order)."""


class InputError(ValueError):
    """User-supplied data is invalid (bad config field, token id out of range)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (no convergence, non-finite loss)."""
