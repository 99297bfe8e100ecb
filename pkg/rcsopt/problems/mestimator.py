import logging
import math
import os

import numpy as np

from rcsopt.core import (
    CompositeOracle,
    LinearBoundConstants,
    ResidualState,
    WeakConvexityInfo,
    check_vector,
)
from rcsopt.errors import RcsValidationError

log = logging.getLogger("rcsopt.problems")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

SUPPORTED_LOSSES = ["l1", "mcp"]


class MEstimatorProblem(CompositeOracle):
    """Robust M-estimator  f(x) = (1/n) Σ ℓ(a_iᵀx − b_i) + p2‖x‖₁

    Φ(x) = (Ax − b, x). ℓ is |·| (convex) or the MCP loss with parameter p1 (weakly convex).
    The residual state caches s = Ax − b. outer_subgradient returns the loss part of ζ,
    (1/n)ℓ'(s); the penalty part p2·sign(x) pairs with the identity block of ∇Φ and is read
    from the state block by block.
    """

    family = "mestimator"

    def __init__(self, A, b, p2, loss="l1", p1=None):
        super().__init__(A, b)
        if loss not in SUPPORTED_LOSSES:
            raise RcsValidationError(
                f"loss {loss} not supported, use one of {SUPPORTED_LOSSES}"
            )
        if p2 < 0:
            raise RcsValidationError(f"penalty weight p2 must be >= 0, got {p2}")
        if loss == "mcp" and (p1 is None or p1 <= 0):
            raise RcsValidationError(f"mcp loss needs p1 > 0, got {p1}")
        self.p2 = float(p2)
        self.loss = loss
        self.p1 = float(p1) if p1 is not None else None
        self.convex = loss == "l1"

    def loss_values(self, r):
        if self.loss == "l1":
            return np.abs(r)
        abs_r = np.abs(r)
        return np.where(
            abs_r <= self.p1, abs_r - r * r / (2.0 * self.p1), 0.5 * self.p1
        )

    def loss_derivative(self, r):
        if self.loss == "l1":
            return np.sign(r)
        return np.where(np.abs(r) <= self.p1, np.sign(r) - r / self.p1, 0.0)

    def objective(self, x) -> float:
        x = check_vector(x, self.d)
        r = self.A @ x - self.b
        return float(np.sum(self.loss_values(r)) / self.n + self.p2 * np.sum(np.abs(x)))

    def objective_from_state(self, state: ResidualState) -> float:
        return float(
            np.sum(self.loss_values(state.s)) / self.n
            + self.p2 * np.sum(np.abs(state.x))
        )

    def init_state(self, x0) -> ResidualState:
        x = check_vector(x0, self.d).copy()
        return ResidualState(x=x, s=self.A @ x - self.b)

    def outer_subgradient(self, state: ResidualState) -> np.ndarray:
        return self.loss_derivative(state.s) / self.n

    def block_jacobian_transpose_apply(self, state, block, zeta):
        return self.A[:, block].T @ zeta + self.p2 * np.sign(state.x[block])

    def apply_block_delta(self, state, block, delta):
        # s^{k+1} = s^k + A_i (x_i^{k+1} − x_i^k)
        state.s += self.A[:, block] @ delta

    def subgradient(self, x) -> np.ndarray:
        x = check_vector(x, self.d)
        r = self.A @ x - self.b
        return self.A.T @ (self.loss_derivative(r) / self.n) + self.p2 * np.sign(x)

    def weak_convexity_modulus(self) -> WeakConvexityInfo:
        if self.loss == "l1":
            return WeakConvexityInfo(rho=0.0, provenance="convex")
        # ρ_h = 1/(n p1) for the averaged MCP loss, Φ linear so only the ρ_h L_Φ⁰² term remains
        return WeakConvexityInfo(
            rho=self.sigma_max**2 / (self.n * self.p1),
            provenance="weakly_convex_loss",
            tolerance=1e-6,
        )

    def linear_bound_constants(self) -> LinearBoundConstants:
        return LinearBoundConstants(
            l1=0.0, l2=self.sigma_max / math.sqrt(self.n) + self.p2 * math.sqrt(self.d)
        )
