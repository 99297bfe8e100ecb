from rcsopt.errors import RcsValidationError
from rcsopt.problems.mestimator import MEstimatorProblem
from rcsopt.problems.phase_retrieval import PhaseRetrievalProblem
from rcsopt.problems.svm import SvmProblem

SUPPORTED_FAMILIES = ["mestimator", "svm", "pr"]


def build_problem(family, A, b, p=None, p1=None, p2=None, loss="l1"):
    """Constructs the problem object for a dataset family"""
    if family == "mestimator":
        return MEstimatorProblem(A, b, p2=p2 if p2 is not None else 0.0, loss=loss, p1=p1)
    if family == "svm":
        if p is None:
            raise RcsValidationError("svm needs the regularization weight p")
        return SvmProblem(A, b, p=p)
    if family == "pr":
        return PhaseRetrievalProblem(A, b)
    raise RcsValidationError(
        f"family {family} not supported, use one of {SUPPORTED_FAMILIES}"
    )


__all__ = [
    "MEstimatorProblem",
    "PhaseRetrievalProblem",
    "SvmProblem",
    "SUPPORTED_FAMILIES",
    "build_problem",
]
