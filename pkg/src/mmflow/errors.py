"""Exception and warning types shared across the package."""


class MMFlowError(Exception):
    """Base class for all package errors."""


class NonFinite(MMFlowError):
    """An energy evaluation returned NaN or infinity (ill-posed configuration)."""


class AuditFailure(MMFlowError):
    """An energy-model assumption failed an empirical audit.

    Carries the name of the violated assumption and a witness point.
    """

    def __init__(self, assumption, witness, detail=""):
        self.assumption = assumption
        self.witness = witness
        msg = f"assumption {assumption} violated at {witness}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InvalidParams(MMFlowError):
    """Scheme or experiment parameters violate their invariants."""


class InnerSolveFailure(MMFlowError):
    """The inner global minimization could not certify a solution at tolerance."""


class BoxEscape(MMFlowError):
    """A minimizer landed on the working-box boundary; the box is too small."""


class EstimateViolation(MMFlowError):
    """A per-step energy estimate failed beyond the permitted slack."""


class ConsistencyFailure(MMFlowError):
    """A structural cross-check failed (e.g. a stable point far from any critical point)."""


class InconsistentSweep(MMFlowError):
    """Runs of a sweep disagree at continuity times; limit extraction is unreliable."""


class NonpositiveAtom(MMFlowError):
    """A detected jump has no positive energy drop (spurious detection)."""


class AmbiguousRegime(MMFlowError):
    """The (epsilon, tau) ratio sequence fits neither limit regime."""


class ResolutionWarning(UserWarning):
    """Grid refinement moved a computed value by more than the accepted fraction."""
