from enum import StrEnum


class Branch(StrEnum):
    ATTRACTING = "attracting"
    REPELLING = "repelling"
