"""Exception hierarchy.

Every failure raised by the numerical modules derives from :class:`CKNError`
and carries a short machine-readable ``kind`` used by the CLI when it
serializes errors.
"""

from __future__ import annotations


class CKNError(Exception):
    kind = "ckn_error"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": str(self)}


class InvalidParams(CKNError, ValueError):
    """A standing hypothesis on (N, p, a, b, mu, lambda, c) is violated."""

    kind = "invalid_params"

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: requires {constraint}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "field": self.field,
                "constraint": self.constraint, "message": str(self)}


class BracketFailure(CKNError):
    kind = "bracket_failure"


class ConservationDrift(CKNError):
    kind = "conservation_drift"


class InsufficientDecay(CKNError):
    kind = "insufficient_decay"


class DegenerateState(CKNError):
    kind = "degenerate_state"


class DivergentTail(CKNError):
    kind = "divergent_tail"


class NoWitness(CKNError):
    kind = "no_witness"


class ZeroFunction(CKNError):
    kind = "zero_function"


class NonConvergence(CKNError):
    kind = "non_convergence"


class NegativeQuotient(CKNError):
    kind = "negative_quotient"
