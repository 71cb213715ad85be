from enum import StrEnum


class SectionKind(StrEnum):
    ENTRY = "entry"
    PRE_JUMP = "pre_jump"


class LingerMethod(StrEnum):
    QUADRATURE = "quadrature"
    EMPIRICAL = "empirical"
