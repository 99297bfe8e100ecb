import math

import numpy as np

from rcsopt.core import (
    CompositeOracle,
    LinearBoundConstants,
    ResidualState,
    WeakConvexityInfo,
    check_vector,
)
from rcsopt.errors import RcsValidationError


class SvmProblem(CompositeOracle):
    """Linear SVM  f(x) = (1/n) Σ max{0, 1 − b_i a_iᵀx} + (p/2)‖x‖²

    Uses Ã = diag(b)·A and caches s = 1_n − Ãx. The hinge selection is max{0, sign(s)} with
    sign(0) = 0, so samples exactly on the margin contribute nothing.
    """

    family = "svm"
    convex = True

    def __init__(self, A, b, p):
        super().__init__(A, b)
        if not np.all(np.abs(self.b) == 1.0):
            raise RcsValidationError("svm labels must be exactly +1 or -1")
        if p <= 0:
            raise RcsValidationError(f"regularization p must be > 0, got {p}")
        self.p = float(p)
        self.A_tilde = np.asfortranarray(self.b[:, None] * self.A)

    def objective(self, x) -> float:
        x = check_vector(x, self.d)
        s = 1.0 - self.A_tilde @ x
        return float(np.sum(np.maximum(s, 0.0)) / self.n + 0.5 * self.p * (x @ x))

    def objective_from_state(self, state: ResidualState) -> float:
        return float(
            np.sum(np.maximum(state.s, 0.0)) / self.n
            + 0.5 * self.p * (state.x @ state.x)
        )

    def init_state(self, x0) -> ResidualState:
        x = check_vector(x0, self.d).copy()
        return ResidualState(x=x, s=1.0 - self.A_tilde @ x)

    def outer_subgradient(self, state: ResidualState) -> np.ndarray:
        return (state.s > 0.0).astype(np.float64) / self.n

    def block_jacobian_transpose_apply(self, state, block, zeta):
        return -(self.A_tilde[:, block].T @ zeta) + self.p * state.x[block]

    def apply_block_delta(self, state, block, delta):
        # s = 1 − Ãx, so the correction enters with the opposite sign
        state.s -= self.A_tilde[:, block] @ delta

    def subgradient(self, x) -> np.ndarray:
        x = check_vector(x, self.d)
        s = 1.0 - self.A_tilde @ x
        zeta = (s > 0.0).astype(np.float64) / self.n
        return -(self.A_tilde.T @ zeta) + self.p * x

    def weak_convexity_modulus(self) -> WeakConvexityInfo:
        return WeakConvexityInfo(rho=0.0, provenance="convex")

    def linear_bound_constants(self) -> LinearBoundConstants:
        # σ_max(Ã) = σ_max(A) since diag(b) is orthogonal
        return LinearBoundConstants(l1=self.p, l2=self.sigma_max / math.sqrt(self.n))
