import logging
import os

import numpy as np

from rcsopt.core import (
    CompositeOracle,
    LinearBoundConstants,
    ResidualState,
    WeakConvexityInfo,
    check_vector,
)

log = logging.getLogger("rcsopt.problems")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))


class PhaseRetrievalProblem(CompositeOracle):
    """Real robust phase retrieval  f(x) = (1/n) ‖(Ax)^∘2 − b^∘2‖₁

    Caches s = Ax. outer_subgradient returns the weight vector (2/n)(s ∘ sign(s^∘2 − b^∘2)),
    which already folds in the diagonal factor of ∇Φ, so every block subgradient is A_iᵀζ.
    Negative entries of b_sq are outlier values kept as given.
    """

    family = "pr"

    def __init__(self, A, b_sq):
        super().__init__(A, b_sq)
        negatives = int(np.sum(self.b < 0.0))
        if negatives:
            log.debug(f"b_sq holds {negatives} negative outlier entries")

    @property
    def b_sq(self) -> np.ndarray:
        return self.b

    def objective(self, x) -> float:
        x = check_vector(x, self.d)
        s = self.A @ x
        return float(np.sum(np.abs(s * s - self.b)) / self.n)

    def objective_from_state(self, state: ResidualState) -> float:
        return float(np.sum(np.abs(state.s * state.s - self.b)) / self.n)

    def init_state(self, x0) -> ResidualState:
        x = check_vector(x0, self.d).copy()
        return ResidualState(x=x, s=self.A @ x)

    def outer_subgradient(self, state: ResidualState) -> np.ndarray:
        s = state.s
        return (2.0 / self.n) * (s * np.sign(s * s - self.b))

    def block_jacobian_transpose_apply(self, state, block, zeta):
        return self.A[:, block].T @ zeta

    def apply_block_delta(self, state, block, delta):
        state.s += self.A[:, block] @ delta

    def subgradient(self, x) -> np.ndarray:
        x = check_vector(x, self.d)
        s = self.A @ x
        return self.A.T @ ((2.0 / self.n) * (s * np.sign(s * s - self.b)))

    def weak_convexity_modulus(self) -> WeakConvexityInfo:
        return WeakConvexityInfo(
            rho=2.0 * self.sigma_max**2 / self.n, provenance="smooth_inner_map", tolerance=1e-6
        )

    def linear_bound_constants(self) -> LinearBoundConstants:
        return LinearBoundConstants(l1=2.0 * self.sigma_max**2 / self.n, l2=0.0)
