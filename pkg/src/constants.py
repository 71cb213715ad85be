from enum import IntEnum, StrEnum


class Environment(StrEnum):
    DEVELOPMENT = "development"
    STAGING = "staging"
    PRODUCTION = "production"


class StateColumn(IntEnum):
    """Column of an oscillator state row (v, u, x, y, z)."""

    V = 0
    U = 1
    X = 2
    Y = 3
    Z = 4


STATE_DIM = 5
STATE_COLUMNS: tuple[str, ...] = ("v", "u", "x", "y", "z")
