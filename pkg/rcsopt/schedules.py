"""Step-size rules for the convex, quadratic-growth and weakly convex regimes.

log is the natural logarithm throughout; any other base only rescales Δ.
"""
import math
from typing import Annotated, ClassVar, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, PositiveFloat, PositiveInt

from rcsopt.errors import InvalidStepError


def sqrt_log_step(k: int, delta: float) -> float:
    """α_k = Δ / (√(k+1) · ln(k+2))"""
    return delta / (math.sqrt(k + 1) * math.log(k + 2))


def quadratic_growth_step(k: int, n_blocks: int, kappa3: float) -> float:
    """α_k = N κ₃ / (k+1)"""
    return n_blocks * kappa3 / (k + 1)


def horizon_step(horizon: int, delta: float, cap: Optional[float] = None) -> float:
    """α = Δ / √(T+1), optionally capped"""
    if cap is not None and cap <= 0:
        raise InvalidStepError(f"step cap must be positive, got {cap}")
    alpha = delta / math.sqrt(horizon + 1)
    if cap is not None:
        return min(alpha, cap)
    return alpha


def square_summable_bound(delta: float) -> float:
    """ā = 2Δ²/(ln 2)², an upper bound on Σ α_k² for the sqrt-log schedule"""
    return 2.0 * delta**2 / math.log(2.0) ** 2


def weakly_convex_step_cap(l1: float, kappa2: float, lam: float, rho: float) -> float:
    """(1 − λρ) / (8 L₁² κ₂² λ); infinite when L₁ = 0"""
    denominator = 8.0 * l1**2 * kappa2**2 * lam
    if denominator == 0.0:
        return math.inf
    return (1.0 - lam * rho) / denominator


class SqrtLog(BaseModel):
    kind: Literal["sqrtlog"] = "sqrtlog"
    delta: PositiveFloat

    diverges: ClassVar[bool] = True

    def step(self, k: int) -> float:
        return sqrt_log_step(k, self.delta)

    def steps(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.float64)
        return self.delta / (np.sqrt(ks + 1.0) * np.log(ks + 2.0))


class QuadraticGrowth(BaseModel):
    kind: Literal["qg"] = "qg"
    n_blocks: PositiveInt
    kappa3: PositiveFloat

    diverges: ClassVar[bool] = True

    def step(self, k: int) -> float:
        return quadratic_growth_step(k, self.n_blocks, self.kappa3)

    def steps(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.float64)
        return self.n_blocks * self.kappa3 / (ks + 1.0)


class FixedHorizon(BaseModel):
    kind: Literal["horizon"] = "horizon"
    delta: PositiveFloat
    horizon: PositiveInt
    cap: Optional[float] = None

    diverges: ClassVar[bool] = False

    def step(self, k: int) -> float:
        return horizon_step(self.horizon, self.delta, self.cap)

    def steps(self, ks: np.ndarray) -> np.ndarray:
        return np.full(np.shape(ks), self.step(0), dtype=np.float64)


StepSchedule = Annotated[
    Union[SqrtLog, QuadraticGrowth, FixedHorizon], Field(discriminator="kind")
]


class SummabilityReport(BaseModel):
    sum_alpha: float
    sum_alpha_sq: float
    divergence_flag: bool


def validate_summability(schedule, horizon: int) -> SummabilityReport:
    """Partial sums of α_k and α_k² over k < horizon.

    divergence_flag marks schedules whose full α-sum diverges analytically.
    """
    alphas = schedule.steps(np.arange(horizon))
    return SummabilityReport(
        sum_alpha=float(np.sum(alphas)),
        sum_alpha_sq=float(np.sum(alphas * alphas)),
        divergence_flag=schedule.diverges,
    )
