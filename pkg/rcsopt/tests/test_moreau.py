import itertools
import math

import numpy as np
import pytest

from rcsopt.core import RngState
from rcsopt.errors import InvalidLambdaError, NotApplicableError, RcsValidationError
from rcsopt.moreau import (
    MoreauConfig,
    critical_set_bound_pr,
    envelope_gradient_norm,
    min_norm_subgradient_pr,
    prox_estimate,
    subregularity_probe,
    theory_bounds,
)
from rcsopt.problems import MEstimatorProblem, PhaseRetrievalProblem
from rcsopt.test_utils import AbsValue, all_problems, mestimator_problem, random_matrix


def grid_min_norm(problem, x, tolerance=1e-9):
    """dist(0, ∂f(x)) over a grid of ξ ∈ {−1, −0.9, ..., 1} for the indices with a kink"""
    s = problem.A @ x
    q = s * s - problem.b
    free = np.flatnonzero(np.abs(q) <= tolerance)
    weights = (2.0 / problem.n) * s * np.sign(q)
    grid = np.round(np.linspace(-1.0, 1.0, 21), 10)
    best = math.inf
    for xi in itertools.product(grid, repeat=len(free)):
        w = weights.copy()
        w[free] = (2.0 / problem.n) * s[free] * np.array(xi)
        best = min(best, float(np.linalg.norm(problem.A.T @ w)))
    return best


class TestProxEstimate:
    def test_soft_threshold(self):
        cfg = MoreauConfig(lam=1.0)
        result = prox_estimate(AbsValue(), np.array([2.0]), cfg)
        assert result.y == pytest.approx([1.0], abs=1e-6)
        assert result.envelope_value == pytest.approx(1.5, abs=1e-6)
        assert result.envelope_gradient == pytest.approx([1.0], abs=1e-6)
        assert result.certified_gap <= 1e-6

    def test_soft_threshold_at_kink(self):
        cfg = MoreauConfig(lam=1.0)
        result = prox_estimate(AbsValue(), np.array([0.5]), cfg)
        # prox(0.5) = 0 and the true envelope value is 0.125
        assert result.envelope_value >= 0.125 - 1e-12
        assert result.envelope_value - 0.125 <= result.certified_gap + 1e-12
        assert abs(result.y[0]) <= result.distance_bound + 1e-12
        assert result.certified_gap <= 1e-6
        assert result.y == pytest.approx([0.0], abs=1e-6)
        assert result.envelope_value == pytest.approx(0.125, abs=1e-6)
        assert result.envelope_gradient == pytest.approx([0.5], abs=1e-6)

    def test_critical_point(self):
        cfg = MoreauConfig(lam=1.0)
        result = prox_estimate(AbsValue(), np.zeros(1), cfg)
        assert result.y.tolist() == [0.0]
        assert result.envelope_gradient.tolist() == [0.0]
        assert result.envelope_value == 0.0

    def test_invalid_lambda(self):
        problem = PhaseRetrievalProblem(np.eye(2), np.ones(2))
        rho = problem.weak_convexity_modulus().rho
        cfg = MoreauConfig(lam=2.0 / rho, rho=rho)
        with pytest.raises(InvalidLambdaError):
            prox_estimate(problem, np.ones(2), cfg)

    def test_default_lambda(self):
        problem = PhaseRetrievalProblem(np.eye(2), np.ones(2))
        cfg = MoreauConfig.for_problem(problem)
        assert cfg.lam == pytest.approx(1.0 / (2.0 * cfg.rho))
        assert MoreauConfig.for_problem(AbsValue()).lam == 1.0

    def test_envelope_sandwich(self):
        for problem in all_problems(seed=1):
            cfg = MoreauConfig.for_problem(problem, inner_budget=2000)
            rng = RngState(12)
            for _ in range(10):
                x = rng.standard_normal(problem.d)
                result = prox_estimate(problem, x, cfg)
                assert result.envelope_value <= problem.objective(x) + 1e-8
                # every objective here is nonnegative, so f* >= 0
                assert result.envelope_value >= 0.0
                assert result.certified_gap >= 0.0

    def test_envelope_gradient_matches_finite_differences(self):
        problem = AbsValue()
        cfg = MoreauConfig(lam=1.0)
        x = np.array([3.0])
        result = prox_estimate(problem, x, cfg)
        assert result.certified_gap <= 1e-8
        h = 1e-4
        forward = prox_estimate(problem, x + h, cfg).envelope_value
        backward = prox_estimate(problem, x - h, cfg).envelope_value
        fd = (forward - backward) / (2 * h)
        assert fd == pytest.approx(result.envelope_gradient[0], rel=1e-3)


class TestEnvelopeGradientNorm:
    def test_soft_threshold(self):
        result = envelope_gradient_norm(AbsValue(), np.array([2.0]), MoreauConfig(lam=1.0))
        assert result.value == pytest.approx(1.0, abs=1e-6)
        assert result.error_bar <= 1e-3

    def test_critical_point(self):
        A = random_matrix(8, 8, seed=2)
        x_star = random_matrix(8, 1, seed=3)[:, 0]
        problem = MEstimatorProblem(A, A @ x_star, p2=0.0)
        result = envelope_gradient_norm(problem, x_star, MoreauConfig(lam=0.5))
        assert result.value <= 1e-6 + result.error_bar


class TestMinNormSubgradient:
    def test_no_kinks(self):
        problem = PhaseRetrievalProblem(np.eye(2), np.ones(2))
        assert min_norm_subgradient_pr(problem, np.array([2.0, 0.0])) == pytest.approx(2.0)

    def test_exact_solution(self):
        A = random_matrix(10, 3, seed=1)
        x_star = np.array([1.0, -2.0, 0.5])
        problem = PhaseRetrievalProblem(A, (A @ x_star) ** 2)
        assert min_norm_subgradient_pr(problem, x_star) <= 1e-8

    def test_orthogonal_kinks(self):
        problem = PhaseRetrievalProblem(np.eye(2), np.ones(2))
        # first index on the kink, second fixed at +1
        assert min_norm_subgradient_pr(problem, np.array([1.0, 2.0])) == pytest.approx(2.0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_grid_oracle(self, seed):
        A = random_matrix(6, 3, seed=seed)
        x = np.array([1.0, 0.5, -1.0])
        b_sq = (A @ x) ** 2
        # keep kinks at up to three indices, move the others off the kink
        b_sq[3:] += np.array([0.5, -0.7, 1.3])
        problem = PhaseRetrievalProblem(A, b_sq)
        value = min_norm_subgradient_pr(problem, x)
        assert value <= grid_min_norm(problem, x) + 1e-6
        assert value >= 0.0

    def test_other_family(self):
        with pytest.raises(NotApplicableError):
            min_norm_subgradient_pr(mestimator_problem(), np.zeros(8))


class TestCriticalSetBound:
    def test_identity(self):
        problem = PhaseRetrievalProblem(np.eye(2), np.ones(2))
        assert critical_set_bound_pr(problem) == pytest.approx(4.0)

    def test_zero_measurements(self):
        problem = PhaseRetrievalProblem(random_matrix(6, 3), np.zeros(6))
        assert critical_set_bound_pr(problem) == 0.0

    def test_homogeneity(self):
        A = random_matrix(12, 4, seed=5)
        b_sq = np.abs(random_matrix(12, 1, seed=6)[:, 0])
        base = critical_set_bound_pr(PhaseRetrievalProblem(A, b_sq))
        scaled = critical_set_bound_pr(PhaseRetrievalProblem(2.0 * A, b_sq))
        assert scaled == pytest.approx(base / 2.0, rel=1e-10)

    def test_rank_deficient(self):
        A = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(NotApplicableError):
            critical_set_bound_pr(PhaseRetrievalProblem(A, np.ones(3)))

    def test_iterates_stay_in_bound(self):
        A = random_matrix(32, 4, seed=8)
        problem = PhaseRetrievalProblem(A, (A @ np.ones(4)) ** 2)
        b2 = critical_set_bound_pr(problem)
        assert np.isfinite(b2)
        assert np.linalg.norm(np.ones(4)) <= b2


class TestSubregularityProbe:
    def test_abs(self):
        report = subregularity_probe(AbsValue(), [np.zeros(1)], [np.array([3.0])])
        record = report.records[0]
        assert record.dist_to_reference == pytest.approx(3.0)
        assert record.residual == pytest.approx(1.0)
        assert report.kappa_hat == pytest.approx(3.0)

    def test_coincident_sample(self):
        report = subregularity_probe(AbsValue(), [np.zeros(1)], [np.zeros(1)])
        assert report.records[0].ratio == 0.0

    def test_envelope_residual(self):
        report = subregularity_probe(
            AbsValue(),
            [np.zeros(1)],
            [np.array([3.0])],
            cfg=MoreauConfig(lam=1.0),
            residual="envelope",
        )
        assert report.records[0].residual == pytest.approx(1.0, abs=1e-6)

    def test_phase_retrieval_ratios_finite(self):
        A = random_matrix(32, 4, seed=2)
        x_star = np.array([1.0, -1.0, 0.5, 2.0])
        problem = PhaseRetrievalProblem(A, (A @ x_star) ** 2)
        b2 = critical_set_bound_pr(problem)
        rng = RngState(4)
        samples = []
        for _ in range(100):
            x = rng.standard_normal(4)
            samples.append(x * (10.0 * b2 * rng.uniform() / np.linalg.norm(x)))
        report = subregularity_probe(problem, [x_star, -x_star], samples)
        assert all(np.isfinite(r.ratio) for r in report.records)

    def test_needs_reference(self):
        with pytest.raises(RcsValidationError):
            subregularity_probe(AbsValue(), [], [np.zeros(1)])

    def test_envelope_needs_config(self):
        with pytest.raises(RcsValidationError):
            subregularity_probe(AbsValue(), [np.zeros(1)], [np.ones(1)], residual="envelope")


class TestTheoryBounds:
    def test_lipschitz_case(self):
        bounds, _ = theory_bounds(
            0.0, 2.0, 0.0, 1.0, 4, 3.0, 1.5, 2.0, 0.0, 1.0
        )
        assert bounds.b1 == pytest.approx((1.5**2 + 2 * 4.0 * 3.0 / 4) * math.e)
        assert bounds.c1 == pytest.approx(8.0)
        assert bounds.c2 == pytest.approx(4.0)

    def test_convex_envelope_value(self):
        _, envelopes = theory_bounds(0.0, 1.0, 0.0, 1.0, 1, 0.0, 1.0, 0.0, 0.0, 1.0)
        # C₁ = 2L₂² = 2
        assert envelopes.convex(0) == pytest.approx(3.232, abs=1e-3)

    def test_convex_envelope_nonincreasing(self):
        _, envelopes = theory_bounds(0.0, 1.0, 0.0, 1.0, 1, 0.0, 1.0, 0.0, 0.0, 1.0)
        values = [envelopes.convex(k) for k in range(3, 2000)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_quadratic_growth_envelope(self):
        _, envelopes = theory_bounds(
            0.0, 1.0, 0.0, 1.0, 2, 0.0, 1.0, 0.0, 0.0, 1.0, kappa3=3.0
        )
        assert envelopes.quadratic_growth(8) == pytest.approx(2 * 2.0 * 9.0 / 9)

    def test_weakly_convex_envelope(self):
        bounds, envelopes = theory_bounds(
            1.0, 0.0, 1.0, 0.5, 1, 1.0, 1.0, 1.0, 2.0, 1.0, horizon=99, envelope_gap0=1.0
        )
        assert bounds.c2 == pytest.approx(2.0 * 2.0 / 0.5)
        expected = (4.0 + 4.0 * bounds.c2) / (0.5 * 10.0)
        assert envelopes.weakly_convex() == pytest.approx(expected)

    def test_invalid_lambda(self):
        with pytest.raises(InvalidLambdaError):
            theory_bounds(1.0, 0.0, 2.0, 0.5, 1, 1.0, 1.0, 1.0, 1.0, 1.0)

    def test_missing_kappa3(self):
        _, envelopes = theory_bounds(0.0, 1.0, 0.0, 1.0, 1, 0.0, 1.0, 0.0, 0.0, 1.0)
        with pytest.raises(RcsValidationError):
            envelopes.quadratic_growth(1)
