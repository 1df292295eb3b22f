"""Exception hierarchy. Everything raised on purpose derives from LobError."""

from __future__ import annotations


class LobError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class PreconditionViolated(LobError):
    pass


class BudgetExceeded(LobError):
    pass


class NegativeQueue(LobError):
    pass


class SideWipedOut(LobError):
    pass


class OutOfGrid(LobError):
    pass


class DeadState(LobError):
    """Total event rate is zero; the chain cannot move."""


class StabilityViolated(LobError):
    pass


class BadParameter(LobError):
    pass


class EmptyBook(LobError):
    pass


class InsufficientData(LobError):
    pass


class ParseError(LobError):
    def __init__(self, row: int, column: int | None, reason: str):
        self.row = row
        self.column = column
        self.reason = reason
        where = f"row {row}" if column is None else f"row {row}, column {column}"
        super().__init__(f"{where}: {reason}")
