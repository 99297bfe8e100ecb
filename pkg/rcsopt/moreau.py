"""Moreau envelope machinery and error-bound diagnostics.

The proximal point is computed by a deterministic subgradient method on the inner problem
g(y) = f(y) + ‖y − x‖²/(2λ), which is μ-strongly convex with μ = 1/λ − ρ. Every visited point
y_t with subgradient v_t gives the quadratic minorant g(y_t) + ⟨v_t, z − y_t⟩ + (μ/2)‖z − y_t‖²
of g; the weighted mean of these minorants is minimized in closed form and certifies how far
the returned point is from the inner optimum.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
from pydantic import BaseModel, NonNegativeFloat, PositiveFloat, PositiveInt

from rcsopt.core import CompositeOracle, RngState, check_vector
from rcsopt.errors import InvalidLambdaError, NotApplicableError, RcsValidationError
from rcsopt.problems import PhaseRetrievalProblem

log = logging.getLogger("rcsopt.moreau")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

ACTIVE_SET_TOLERANCE = 1e-9
RANK_THRESHOLD = 1e-10


class MoreauConfig(BaseModel):
    lam: PositiveFloat
    rho: NonNegativeFloat = 0.0
    inner_budget: PositiveInt = 5000
    inner_tolerance: PositiveFloat = 1e-8

    @classmethod
    def for_problem(cls, problem: CompositeOracle, lam=None, **kwargs):
        """Uses the problem's modulus and defaults λ to 1/(2ρ), or 1 for convex problems"""
        rho = problem.weak_convexity_modulus().rho
        if lam is None:
            lam = 1.0 if rho == 0.0 else 1.0 / (2.0 * rho)
        return cls(lam=lam, rho=rho, **kwargs)

    @property
    def strong_convexity(self) -> float:
        return 1.0 / self.lam - self.rho

    def check(self):
        if self.rho > 0.0 and self.lam * self.rho >= 1.0:
            raise InvalidLambdaError(
                f"λ={self.lam} violates λ < 1/ρ = {1.0 / self.rho}"
            )


@dataclass
class ProxResult:
    y: np.ndarray
    envelope_value: float
    envelope_gradient: np.ndarray
    certified_gap: float
    # bound on ‖y − prox(x)‖ implied by the gap and strong convexity
    distance_bound: float


class EnvelopeGradientNorm(NamedTuple):
    value: float
    error_bar: float
    certified_gap: float


def prox_estimate(problem: CompositeOracle, x, cfg: MoreauConfig) -> ProxResult:
    """Approximate prox_{λ,f}(x) together with f_λ(x) and ∇f_λ(x) = (x − y)/λ"""
    cfg.check()
    x = check_vector(x, problem.d)
    lam = cfg.lam
    mu = cfg.strong_convexity

    def inner_value(y):
        diff = y - x
        return problem.objective(y) + (diff @ diff) / (2.0 * lam)

    y = x.copy()
    best_y, best_g = x.copy(), problem.objective(x)
    weight_total = 0.0
    # accumulators of the averaged quadratic minorant c + ⟨q, z⟩ + (μ/2)‖z‖²
    const_acc = 0.0
    linear_acc = np.zeros(problem.d)
    averaged_y = np.zeros(problem.d)
    lower_bound = -math.inf

    for t in range(cfg.inner_budget):
        g_val = inner_value(y)
        if g_val < best_g:
            best_g, best_y = g_val, y.copy()
        v = problem.subgradient(y) + (y - x) / lam
        weight = t + 1.0
        weight_total += weight
        const_acc += weight * (g_val - v @ y + 0.5 * mu * (y @ y))
        linear_acc += weight * (v - mu * y)
        averaged_y += weight * y

        q = linear_acc / weight_total
        lower_bound = max(lower_bound, const_acc / weight_total - (q @ q) / (2.0 * mu))
        # single-point bound from strong convexity
        lower_bound = max(lower_bound, g_val - (v @ v) / (2.0 * mu))
        if best_g - lower_bound <= cfg.inner_tolerance:
            break
        y = y - (2.0 / (mu * (t + 2.0))) * v

    if weight_total:
        candidate = averaged_y / weight_total
        g_val = inner_value(candidate)
        if g_val < best_g:
            best_g, best_y = g_val, candidate

    gap = max(0.0, best_g - lower_bound)
    return ProxResult(
        y=best_y,
        envelope_value=best_g,
        envelope_gradient=(x - best_y) / lam,
        certified_gap=gap,
        distance_bound=math.sqrt(2.0 * gap / mu),
    )


def envelope_gradient_norm(problem: CompositeOracle, x, cfg: MoreauConfig):
    """‖∇f_λ(x)‖ with an error bar propagated from the certified inner gap"""
    result = prox_estimate(problem, x, cfg)
    return EnvelopeGradientNorm(
        value=float(np.linalg.norm(result.envelope_gradient)),
        error_bar=result.distance_bound / cfg.lam,
        certified_gap=result.certified_gap,
    )


def _require_phase_retrieval(problem):
    if not isinstance(problem, PhaseRetrievalProblem):
        raise NotApplicableError(
            f"only defined for phase retrieval, got {problem.family}"
        )


def min_norm_subgradient_pr(problem: PhaseRetrievalProblem, x) -> float:
    """Upper bound on dist(0, ∂f(x)) for robust phase retrieval.

    Indices with (a_iᵀx)² − b_i² within ACTIVE_SET_TOLERANCE of zero keep a free ξ_i ∈ [−1, 1];
    the remaining indices are fixed at ±1. The box-constrained least squares over ξ is solved
    exactly by bounded-variable least squares.
    """
    _require_phase_retrieval(problem)
    x = check_vector(x, problem.d)
    s = problem.A @ x
    q = s * s - problem.b
    free = np.abs(q) <= ACTIVE_SET_TOLERANCE
    scale = 2.0 / problem.n
    fixed_weights = np.where(free, 0.0, scale * s * np.sign(q))
    c = problem.A.T @ fixed_weights
    if not np.any(free):
        return float(np.linalg.norm(c))

    M = problem.A[free].T * (scale * s[free])
    if not np.any(M):
        return float(np.linalg.norm(c))
    xi = scipy.optimize.lsq_linear(M, -c, bounds=(-1.0, 1.0), method="bvls").x
    return float(min(np.linalg.norm(c + M @ xi), np.linalg.norm(c)))


def _smallest_gram_eigenvalue(A: np.ndarray, max_iter=1000, tol=1e-14) -> float:
    """λ_min(AᵀA) by inverse power iteration on a Cholesky factorization"""
    gram = A.T @ A
    try:
        factor = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as e:
        raise NotApplicableError("AᵀA is singular, A lacks full column rank") from e
    v = RngState(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = scipy.linalg.cho_solve(factor, v)
        norm_w = np.linalg.norm(w)
        v = w / norm_w
        new_estimate = 1.0 / norm_w
        if abs(new_estimate - estimate) <= tol * new_estimate:
            estimate = new_estimate
            break
        estimate = new_estimate
    return float(v @ (gram @ v))


def critical_set_bound_pr(problem: PhaseRetrievalProblem, x=None) -> float:
    """Worst-case radius of the critical set: 2 Σ_i ‖a_i‖·|b_i| / √σ_min(QᵀQ) with Q = AᵀA.

    Summing over every index over-estimates the bound for any split of the indices, since the
    split depends on the unknown critical point. |b_i| is √|b_i²| so negative outlier values
    count with their magnitude.
    """
    _require_phase_retrieval(problem)
    lam_min = _smallest_gram_eigenvalue(problem.A)
    if lam_min <= RANK_THRESHOLD:
        raise NotApplicableError(
            f"σ_min(AᵀA)={lam_min:.3g} below {RANK_THRESHOLD}, A lacks full column rank"
        )
    row_norms = np.linalg.norm(problem.A, axis=1)
    magnitudes = np.sqrt(np.abs(problem.b))
    # √σ_min(QᵀQ) = σ_min(Q) = λ_min(AᵀA)
    return float(2.0 * np.sum(row_norms * magnitudes) / lam_min)


class ProbeRecord(BaseModel):
    dist_to_reference: float
    residual: float
    ratio: float


class SubregularityReport(BaseModel):
    residual_kind: str
    records: List[ProbeRecord]
    kappa_hat: float


def _ratio(dist: float, residual: float) -> float:
    if dist == 0.0:
        return 0.0
    if residual == 0.0:
        return math.inf
    return dist / residual


def subregularity_probe(
    problem: CompositeOracle,
    reference_points: Sequence[np.ndarray],
    samples: Sequence[np.ndarray],
    cfg: Optional[MoreauConfig] = None,
    residual: str = "subgradient",
) -> SubregularityReport:
    """Empirical dist(x, X̄) / residual(x) ratios; the largest is reported as κ̂.

    residual is "subgradient" (min-norm subgradient for phase retrieval, norm of the selected
    subgradient otherwise, both upper bounds on dist(0, ∂f(x))) or "envelope" (‖∇f_λ(x)‖).
    """
    if not len(reference_points):
        raise RcsValidationError("subregularity probe needs at least one reference point")
    if residual not in ("subgradient", "envelope"):
        raise RcsValidationError(f"unknown residual kind {residual}")
    if residual == "envelope" and cfg is None:
        raise RcsValidationError("envelope residuals need a MoreauConfig")
    references = np.array([check_vector(p, problem.d) for p in reference_points])
    records = []
    for x in samples:
        x = check_vector(x, problem.d)
        dist = float(np.min(np.linalg.norm(references - x, axis=1)))
        if residual == "envelope":
            value = envelope_gradient_norm(problem, x, cfg).value
        elif isinstance(problem, PhaseRetrievalProblem):
            value = min_norm_subgradient_pr(problem, x)
        else:
            value = float(np.linalg.norm(problem.subgradient(x)))
        records.append(
            ProbeRecord(dist_to_reference=dist, residual=value, ratio=_ratio(dist, value))
        )
    kappa_hat = max((r.ratio for r in records), default=0.0)
    return SubregularityReport(residual_kind=residual, records=records, kappa_hat=kappa_hat)


class TheoryBounds(BaseModel):
    b1: NonNegativeFloat
    c1: NonNegativeFloat
    c2: NonNegativeFloat
    b2: NonNegativeFloat
    kappa2: Optional[PositiveFloat] = None
    kappa3: Optional[PositiveFloat] = None


class RateEnvelopes:
    """Rate envelopes k ↦ bound(k) for the three step-size regimes"""

    def __init__(
        self,
        bounds: TheoryBounds,
        n_blocks,
        delta,
        dist0,
        lam,
        rho,
        horizon=None,
        envelope_gap0=None,
    ):
        self.bounds = bounds
        self.n_blocks = n_blocks
        self.delta = delta
        self.dist0 = dist0
        self.lam = lam
        self.rho = rho
        self.horizon = horizon
        self.envelope_gap0 = envelope_gap0

    def convex(self, k) -> float:
        """log(k+2)(N dist²/(2Δ) + C₁Δ/(log 2)²)/√(k+1)"""
        lead = self.n_blocks * self.dist0**2 / (2.0 * self.delta)
        tail = self.bounds.c1 * self.delta / math.log(2.0) ** 2
        return math.log(k + 2) * (lead + tail) / math.sqrt(k + 1)

    def quadratic_growth(self, k) -> float:
        """N C₁ κ₃² / (k+1)"""
        if self.bounds.kappa3 is None:
            raise RcsValidationError("quadratic growth envelope needs κ₃")
        return self.n_blocks * self.bounds.c1 * self.bounds.kappa3**2 / (k + 1)

    def weakly_convex(self, horizon=None) -> float:
        """(4N(f_λ(x⁰) − f*)/Δ + 4C₂Δ) / ((1 − λρ)√(T+1))"""
        horizon = horizon if horizon is not None else self.horizon
        if horizon is None or self.envelope_gap0 is None:
            raise RcsValidationError(
                "weakly convex envelope needs the horizon T and f_λ(x⁰) − f*"
            )
        numerator = (
            4.0 * self.n_blocks * self.envelope_gap0 / self.delta
            + 4.0 * self.bounds.c2 * self.delta
        )
        return numerator / ((1.0 - self.lam * self.rho) * math.sqrt(horizon + 1))


def theory_bounds(
    l1,
    l2,
    rho,
    lam,
    n_blocks,
    a_bar,
    dist0,
    xstar_norm,
    b2,
    delta,
    horizon=None,
    kappa2=None,
    kappa3=None,
    envelope_gap0=None,
):
    """Returns (TheoryBounds, RateEnvelopes) for the given problem and schedule constants"""
    if lam * rho >= 1.0:
        raise InvalidLambdaError(f"λρ = {lam * rho} must be below 1")
    for name, value in (("l1", l1), ("l2", l2), ("a_bar", a_bar), ("b2", b2)):
        if not math.isfinite(value) or value < 0:
            raise RcsValidationError(f"{name} must be finite and nonnegative, got {value}")
    ratio = a_bar / n_blocks
    exponent = 1.0 + 4.0 * l1**2 * ratio
    # math.exp overflows past ~709
    growth = math.exp(exponent) if exponent < 700.0 else math.inf
    b1 = (dist0**2 + (4.0 * l1**2 * xstar_norm**2 + 2.0 * l2**2) * ratio) * growth
    c1 = 28.0 * l1**2 * b1 + 16.0 * l1**2 * xstar_norm**2 + 2.0 * l2**2
    c2 = (2.0 * l1**2 * b2 + l2**2) / lam
    bounds = TheoryBounds(b1=b1, c1=c1, c2=c2, b2=b2, kappa2=kappa2, kappa3=kappa3)
    envelopes = RateEnvelopes(
        bounds,
        n_blocks=n_blocks,
        delta=delta,
        dist0=dist0,
        lam=lam,
        rho=rho,
        horizon=horizon,
        envelope_gap0=envelope_gap0,
    )
    return bounds, envelopes
