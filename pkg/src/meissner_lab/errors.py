"""Exception types raised across the package.

Every error carries a short machine-readable ``code`` so the command line
driver can serialize failures without string matching.
"""

from __future__ import annotations


class MeissnerLabError(Exception):
    """Base class; ``code`` names the failure kind."""

    code = "Error"

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": str(self)}
        out.update({k: v for k, v in self.details.items()})
        return out


def _make(name: str, doc: str, base=MeissnerLabError):
    return type(name, (base,), {"code": name, "__doc__": doc})


OutOfDomain = _make("OutOfDomain", "Argument outside the domain where the cubic inverse exists.")
InvalidSpec = _make("InvalidSpec", "Malformed grid, parameter or configuration description.")
PlacementMismatch = _make("PlacementMismatch", "Operator applied to a field on the wrong placement.")
GridMismatch = _make("GridMismatch", "Fields living on different grids or placements were combined.")
SolverFailure = _make("SolverFailure", "An iterative or Newton solve did not converge.")
NonPositiveCoefficient = _make("NonPositiveCoefficient", "A coefficient required to be positive was not.")
OutOfK = _make("OutOfK", "Converged state lies outside the convexity set.")
NotConverged = _make("NotConverged", "Operation requires a converged state.")
NeverEntersK = _make("NeverEntersK", "Continuation starts outside the convexity set.")
UnboundedThreshold = _make("UnboundedThreshold", "No threshold found within the step budget.")
BudgetExceeded = _make("BudgetExceeded", "Continuation exhausted its step budget.")
ZeroDatum = _make("ZeroDatum", "Boundary datum is identically zero.")
NonGradientData = _make("NonGradientData", "Tangential data has a rotational component.")
NonzeroMean = _make("NonzeroMean", "Normal data has a nonzero mean.")
Incompatible = _make("Incompatible", "Tangential data violates the exterior solvability condition.")
NonzeroFlux = _make("NonzeroFlux", "Source potential carries a nonzero flux.")
SamplingMismatch = _make("SamplingMismatch", "Traces sampled on different point sets.")
AboveThreshold = _make("AboveThreshold", "Applied field exceeds the superheating value.")
MissingColumn = _make("MissingColumn", "Requested column absent from the table.")
NonPositiveLogData = _make("NonPositiveLogData", "Log axis requested for non-positive data.")

__all__ = [
    "MeissnerLabError",
    "OutOfDomain",
    "InvalidSpec",
    "PlacementMismatch",
    "GridMismatch",
    "SolverFailure",
    "NonPositiveCoefficient",
    "OutOfK",
    "NotConverged",
    "NeverEntersK",
    "UnboundedThreshold",
    "BudgetExceeded",
    "ZeroDatum",
    "NonGradientData",
    "NonzeroMean",
    "Incompatible",
    "NonzeroFlux",
    "SamplingMismatch",
    "AboveThreshold",
    "MissingColumn",
    "NonPositiveLogData",
]
