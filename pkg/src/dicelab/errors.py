"""Exception hierarchy shared by every dicelab module."""


class DiceLabError(Exception):
    """Base class for all dicelab errors."""


class FaceOutOfRange(DiceLabError, ValueError):
    pass


class BadSum(DiceLabError, ValueError):
    pass


class DimensionMismatch(DiceLabError, ValueError):
    pass


class MethodUnavailable(DiceLabError, ValueError):
    pass


class RejectionBudgetExceeded(DiceLabError, RuntimeError):
    pass


class DomainError(DiceLabError, ValueError):
    pass


class PairingFailure(DiceLabError, ArithmeticError):
    pass


class GridTooSmall(DiceLabError, ValueError):
    pass


class TruncationTooSmall(DiceLabError, ValueError):
    pass


class WitnessSearchFailed(DiceLabError, RuntimeError):
    pass


class TooLarge(DiceLabError, ValueError):
    pass
