from enum import StrEnum


class ModelId(StrEnum):
    REFERENCE_BURSTER = "reference_burster"
    FUNCTIONAL = "functional"


class CouplingScheme(StrEnum):
    ALL_TO_ALL = "all_to_all"


class BoundSource(StrEnum):
    MEASURED = "measured"
    USER = "user"


MODEL_FUNCTIONS: tuple[str, ...] = ("h1", "h2", "f", "g1", "g2")
