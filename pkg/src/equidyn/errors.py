"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit it
as JSON. ``PreconditionError`` subclasses map to exit status 2, anything else
to exit status 1.
"""

from __future__ import annotations


class EquidynError(Exception):
    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), "details": self.details}


class PreconditionError(EquidynError):
    code = "precondition"


class ZeroVector(PreconditionError):
    code = "zero_vector"


class DimensionMismatch(PreconditionError):
    code = "dimension_mismatch"


class DegenerateImage(EquidynError):
    code = "degenerate_image"


class DegenerateForm(PreconditionError):
    code = "degenerate_form"


class DegenerateMap(PreconditionError):
    code = "degenerate_map"


class SchemaError(PreconditionError):
    code = "schema_error"


class UnstableDegree(EquidynError):
    code = "unstable_degree"


class IsolationFailure(PreconditionError):
    code = "isolation_failure"


class SolverDivergence(EquidynError):
    code = "solver_divergence"


class PathFailure(EquidynError):
    code = "path_failure"


class MultiplicityAmbiguity(EquidynError):
    code = "multiplicity_ambiguity"


class BudgetExceeded(PreconditionError):
    code = "budget_exceeded"


class CriticalCollision(EquidynError):
    code = "critical_collision"


class StepTooLarge(EquidynError):
    code = "step_too_large"


class DiskMeetsPostcritical(PreconditionError):
    code = "disk_meets_postcritical"


class PreconditionViolated(PreconditionError):
    code = "precondition_violated"


class BandwidthInvalid(PreconditionError):
    code = "bandwidth_invalid"


class ExceptionalStart(PreconditionError):
    code = "exceptional_start"


class OrbitNearCritical(EquidynError):
    code = "orbit_near_critical"


class LemmaViolation(EquidynError):
    code = "lemma_violation"


class CriterionDisagreement(EquidynError):
    code = "criterion_disagreement"


class TooManyExceptional(EquidynError):
    code = "too_many_exceptional"


class InsufficientGrowth(EquidynError):
    code = "insufficient_growth"


class EmptyBall(EquidynError):
    code = "empty_ball"


class NoValidPatch(EquidynError):
    code = "no_valid_patch"


class QuadratureNonConvergent(EquidynError):
    code = "quadrature_nonconvergent"


class NonInvariantMeasure(UserWarning):
    """Issued when a diagnostic needs an invariant measure and gets a poor one."""
