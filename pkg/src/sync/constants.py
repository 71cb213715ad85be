from enum import StrEnum


class CheckStatus(StrEnum):
    PASSED = "passed"
    FAILED = "failed"
    VACUOUS = "vacuous"
    INVALID = "invalid"


class EvaluationPoint(StrEnum):
    PROOF = "proof"
    THEOREM = "theorem"


SYNC_TRACE_COLUMNS: tuple[str, ...] = ("t", "V_v", "W", "envelope", "residual", "cs_slack")
