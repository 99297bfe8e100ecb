import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from rcsopt.core import RngState, make_partition
from rcsopt.datasets import (
    MEstimatorGenConfig,
    PrGenConfig,
    SvmGenConfig,
    generate_mestimator_data,
    generate_pr_instance,
    generate_svm_data,
    load_dataset,
    write_pgm,
)
from rcsopt.datasets.container import Dataset
from rcsopt.errors import DatasetError, NotApplicableError, RcsValidationError
from rcsopt.models import (
    DiagnosticsReport,
    EnvelopeProbe,
    ExperimentConfig,
    ReferenceProvenance,
    ReferenceSolution,
    RunSummary,
    SweepEntry,
    SweepSummary,
)
from rcsopt.moreau import (
    MoreauConfig,
    critical_set_bound_pr,
    envelope_gradient_norm,
    prox_estimate,
    subregularity_probe,
    theory_bounds,
)
from rcsopt.problems import PhaseRetrievalProblem, build_problem
from rcsopt.schedules import (
    FixedHorizon,
    QuadraticGrowth,
    SqrtLog,
    square_summable_bound,
    weakly_convex_step_cap,
)
from rcsopt.solver import SolverConfig, SolverTrace, rcs_run, subgrad_run
from rcsopt.utils import seed_output_path, thread_count
from rcsopt.write_files import write_model, write_trace_csv

log = logging.getLogger("rcsopt.experiment")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

REFERENCE_SEEDS = 5
REFERENCE_RECORDS = 1000
SUPPORT_THRESHOLD = 0.1
# xor-ed into the run seed, keeps start points off the data generator streams
START_POINT_SALT = 0x5EED_57A2_7000_0000


@dataclass
class RunResult:
    trace: SolverTrace
    summary: RunSummary


def load_reference(path) -> ReferenceSolution:
    try:
        with open(path) as f:
            return ReferenceSolution.model_validate_json(f.read())
    except FileNotFoundError:
        raise RcsValidationError(f"reference file {path} not found")


def load_points(path) -> List[np.ndarray]:
    """Points to diagnose from a JSON file with "points", or a run summary or reference JSON"""
    with open(path) as f:
        document = json.load(f)
    if "points" in document:
        return [np.asarray(p, dtype=np.float64) for p in document["points"]]
    for key in ("final_x", "x_ref"):
        if key in document:
            return [np.asarray(document[key], dtype=np.float64)]
    raise RcsValidationError(f"{path} holds no points, final_x or x_ref")


def image_shape(dataset: Dataset):
    """(width, height) recorded by datagen --image, else square when d allows it, else a row"""
    image = dataset.config.get("image")
    if image:
        return image["width"], image["height"]
    side = math.isqrt(dataset.d)
    if side * side == dataset.d:
        return side, side
    return dataset.d, 1


def distance_to_truth(x: np.ndarray, x_star: np.ndarray, sign_ambiguous=False) -> float:
    """‖x − x*‖, or min(‖x − x*‖, ‖x + x*‖) when x* is only known up to sign"""
    distance = float(np.linalg.norm(x - x_star))
    if sign_ambiguous:
        distance = min(distance, float(np.linalg.norm(x + x_star)))
    return distance


def support(x: np.ndarray, threshold=SUPPORT_THRESHOLD) -> np.ndarray:
    """Indices whose magnitude exceeds threshold · max|x_j|"""
    magnitude = np.abs(x)
    peak = magnitude.max(initial=0.0)
    if peak == 0.0:
        return np.array([], dtype=np.int64)
    return np.flatnonzero(magnitude > threshold * peak)


class Experiment:
    """Loads the problem an ExperimentConfig describes and drives runs, references and
    diagnostics over it
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._dataset: Optional[Dataset] = None
        self._problem = None
        self._reference: Optional[ReferenceSolution] = None

    @classmethod
    def from_settings(cls, settings: dict):
        return cls(ExperimentConfig.model_validate(settings))

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = self.load_dataset()
        return self._dataset

    @property
    def problem(self):
        if self._problem is None:
            spec = self.config.problem
            dataset = self.dataset
            self._problem = build_problem(
                spec.family,
                dataset.A,
                dataset.b,
                p=spec.p,
                p1=spec.p1,
                p2=spec.p2,
                loss=spec.loss,
            )
        return self._problem

    @property
    def reference(self) -> Optional[ReferenceSolution]:
        if self._reference is None and self.config.reference:
            self._reference = load_reference(self.config.reference)
            if len(self._reference.x_ref) != self.problem.d:
                raise RcsValidationError(
                    f"reference has d={len(self._reference.x_ref)}, problem has d={self.problem.d}"
                )
        return self._reference

    def load_dataset(self) -> Dataset:
        spec = self.config.problem
        if spec.data:
            if not os.path.exists(spec.data):
                raise DatasetError(f"dataset {spec.data} not found")
            return load_dataset(spec.data, family=spec.family)
        if not spec.generate:
            raise RcsValidationError("problem needs either a data path or generator settings")
        if spec.family == "mestimator":
            gen = MEstimatorGenConfig.model_validate(spec.generate)
            A, b, x_star = generate_mestimator_data(gen)
        elif spec.family == "svm":
            gen = SvmGenConfig.model_validate(spec.generate)
            A, b, x_star = generate_svm_data(gen)
        else:
            gen = PrGenConfig.model_validate(spec.generate)
            A, b, x_star = generate_pr_instance(gen)
        return Dataset(
            family=spec.family, A=A, b=b, x_star=x_star, config=gen.model_dump()
        )

    @property
    def n_blocks(self) -> int:
        solver = self.config.solver
        if solver.method == "subgrad":
            return 1
        return solver.blocks or self.problem.d

    @property
    def iterations(self) -> int:
        """One RCS epoch is N iterations; one full subgradient iteration is an epoch"""
        return self.config.solver.epochs * self.n_blocks

    def moreau_config(self) -> MoreauConfig:
        diagnostics = self.config.diagnostics
        return MoreauConfig.for_problem(
            self.problem,
            lam=diagnostics.lam,
            inner_budget=diagnostics.inner_budget,
            inner_tolerance=diagnostics.inner_tolerance,
        )

    def schedule(self):
        solver = self.config.solver
        if solver.schedule == "sqrtlog":
            return SqrtLog(delta=solver.delta)
        if solver.schedule == "qg":
            if solver.kappa3 is None:
                raise RcsValidationError("quadratic growth steps need kappa3")
            return QuadraticGrowth(n_blocks=self.n_blocks, kappa3=solver.kappa3)
        cap = solver.cap
        if cap is None and solver.kappa2 is not None:
            moreau = self.moreau_config()
            cap = weakly_convex_step_cap(
                self.problem.linear_bound_constants().l1,
                solver.kappa2,
                moreau.lam,
                moreau.rho,
            )
            cap = None if math.isinf(cap) else cap
            log.info(f"fixed-horizon step cap from kappa2: {cap}")
        return FixedHorizon(delta=solver.delta, horizon=max(self.iterations, 1), cap=cap)

    @property
    def init(self) -> str:
        if self.config.solver.init:
            return self.config.solver.init
        return "random" if self.config.problem.family == "pr" else "zero"

    def initial_point(self, seed: int) -> np.ndarray:
        if self.init == "random":
            return RngState(seed ^ START_POINT_SALT).standard_normal(self.problem.d)
        if self.config.problem.family == "pr":
            log.warning("x0 = 0 is a critical point of phase retrieval, the run will not move")
        return np.zeros(self.problem.d)

    def probe(self):
        if not self.config.diagnostics.probe_every:
            return None
        cfg = self.moreau_config()
        cfg.check()

        def envelope_probe(x):
            result = envelope_gradient_norm(self.problem, x, cfg)
            return result.value, result.certified_gap

        return envelope_probe

    def solve(self, seed: int) -> SolverTrace:
        solver = self.config.solver
        config = SolverConfig(
            schedule=self.schedule(),
            iterations=self.iterations,
            seed=seed,
            record_every=solver.record_every,
            probe_every=self.config.diagnostics.probe_every,
            track_average_objective=solver.track_average_objective,
        )
        x0 = self.initial_point(seed)
        if solver.method == "subgrad":
            return subgrad_run(self.problem, config, x0, probe=self.probe())
        partition = make_partition(self.problem.d, self.n_blocks)
        return rcs_run(self.problem, partition, config, x0, probe=self.probe())

    def summarize(self, trace: SolverTrace, seed: int) -> RunSummary:
        solver = self.config.solver
        reference = self.reference
        f_star = reference.f_star if reference else None
        weighted = (
            self.problem.objective(trace.weighted_average)
            if trace.weighted_average is not None
            else None
        )
        distance, recovered = self.truth_measures(trace.final_x)
        envelope = None
        if self.config.diagnostics.probe_every:
            envelope = [
                r.envelope_gradient_norm
                for r in trace.records
                if r.envelope_gradient_norm is not None
            ]
        return RunSummary(
            family=self.config.problem.family,
            method=solver.method,
            n=self.problem.n,
            d=self.problem.d,
            n_blocks=trace.n_blocks,
            iterations=trace.iterations,
            epochs=solver.epochs,
            seed=seed,
            schedule=self.schedule().model_dump(),
            initial_objective=trace.initial_objective,
            final_objective=trace.final_objective,
            best_objective=trace.best_objective,
            weighted_average_objective=weighted,
            f_star=f_star,
            final_gap=None if f_star is None else trace.final_objective - f_star,
            reference_provenance=reference.provenance if reference else None,
            wall_time=trace.wall_time,
            workspace_bytes_per_iter=trace.workspace_bytes_per_iter,
            record_count=len(trace.records),
            envelope_gradient_norms=envelope,
            distance_to_truth=distance,
            support_recovered=recovered,
            final_x=trace.final_x.tolist(),
        )

    def truth_measures(self, x: np.ndarray):
        """(distance to the planted signal, whether its support was recovered), None where the
        dataset has no planted signal or the measure has no meaning for the family
        """
        x_star = self.dataset.x_star
        family = self.config.problem.family
        if x_star is None or family == "svm":
            return None, None
        distance = distance_to_truth(x, x_star, sign_ambiguous=family == "pr")
        if family == "pr":
            return distance, None
        return distance, bool(np.array_equal(support(x), support(x_star)))

    def run(self, seed: Optional[int] = None, multiple=False) -> RunResult:
        """Runs one seed and writes the configured trace, summary and image outputs"""
        seed = self.config.solver.seed if seed is None else seed
        trace = self.solve(seed)
        summary = self.summarize(trace, seed)
        output = self.config.output
        if output.trace:
            write_trace_csv(
                seed_output_path(output.trace, seed, multiple), trace.records, summary.f_star
            )
        if output.summary:
            write_model(seed_output_path(output.summary, seed, multiple), summary)
        if output.pgm:
            width, height = image_shape(self.dataset)
            write_pgm(seed_output_path(output.pgm, seed, multiple), trace.final_x, width, height)
        return RunResult(trace=trace, summary=summary)

    def run_sweep(self, seeds: List[int], threads=None) -> SweepSummary:
        """Runs independent seeds in parallel over the shared problem data, then merges the
        per-seed results in seed order
        """
        if not seeds:
            raise RcsValidationError("seed sweep needs at least one seed")
        # build the shared problem before the workers start
        problem = self.problem
        problem.sigma_max
        workers = min(thread_count(threads), len(seeds))
        log.info(f"running {len(seeds)} seeds on {workers} threads")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: self.run(s, multiple=True), seeds))

        output = self.config.output
        runs = [
            SweepEntry(
                seed=seed,
                final_objective=result.summary.final_objective,
                final_gap=result.summary.final_gap,
                trace=seed_output_path(output.trace, seed, True),
                summary=seed_output_path(output.summary, seed, True),
            )
            for seed, result in zip(seeds, results)
        ]
        gaps = [r.final_gap for r in runs if r.final_gap is not None]
        sweep = SweepSummary(
            family=self.config.problem.family,
            method=self.config.solver.method,
            runs=runs,
            mean_final_objective=float(np.mean([r.final_objective for r in runs])),
            mean_final_gap=float(np.mean(gaps)) if gaps else None,
        )
        if output.summary:
            write_model(Path(output.summary).with_suffix(".sweep.json"), sweep)
        return sweep

    def compute_reference(self, budget: int, seeds=REFERENCE_SEEDS) -> ReferenceSolution:
        """Best objective over full subgradient runs with sqrt-log steps from several starts.

        The first start is the origin, the others Gaussian. Convex problems get an extra run
        with quadratic growth steps from the best point when kappa3 is configured.
        """
        problem = self.problem
        solver = self.config.solver
        record_every = max(1, budget // REFERENCE_RECORDS)
        best_f, best_x = math.inf, None

        def consider(trace: SolverTrace):
            nonlocal best_f, best_x
            candidates = [(trace.best_objective, trace.best_x)]
            if trace.weighted_average is not None:
                candidates.append(
                    (problem.objective(trace.weighted_average), trace.weighted_average)
                )
            for value, x in candidates:
                if value < best_f:
                    best_f, best_x = value, x.copy()

        for k in range(seeds):
            seed = solver.seed + k
            x0 = np.zeros(problem.d)
            if k > 0:
                x0 = RngState(seed ^ START_POINT_SALT).standard_normal(problem.d)
            config = SolverConfig(
                schedule=SqrtLog(delta=solver.delta),
                iterations=budget,
                seed=seed,
                record_every=record_every,
            )
            consider(subgrad_run(problem, config, x0))
            log.info(f"reference start {k + 1}/{seeds}: best f={best_f:.8g}")

        tail = 0
        if problem.convex and solver.kappa3 is not None and budget:
            tail = budget
            config = SolverConfig(
                schedule=QuadraticGrowth(n_blocks=1, kappa3=solver.kappa3),
                iterations=tail,
                seed=solver.seed,
                record_every=record_every,
            )
            consider(subgrad_run(problem, config, best_x))
            log.info(f"reference after quadratic growth tail: f={best_f:.8g}")

        return ReferenceSolution(
            family=self.config.problem.family,
            f_star=best_f,
            x_ref=best_x.tolist(),
            provenance=ReferenceProvenance(
                method="subgrad",
                iterations=budget,
                seed_count=seeds,
                schedule="sqrtlog",
                tail_iterations=tail,
            ),
        )

    def diagnose(self, points: List[np.ndarray]) -> DiagnosticsReport:
        """Envelope gradients at the given points, plus the critical-set bound for phase
        retrieval, and subregularity ratios and theory constants when a reference is known
        """
        problem = self.problem
        cfg = self.moreau_config()
        cfg.check()
        info = problem.weak_convexity_modulus()

        probes = []
        for index, x in enumerate(points):
            result = prox_estimate(problem, x, cfg)
            probes.append(
                EnvelopeProbe(
                    index=index,
                    objective=problem.objective(x),
                    envelope_value=result.envelope_value,
                    envelope_gradient_norm=float(np.linalg.norm(result.envelope_gradient)),
                    error_bar=result.distance_bound / cfg.lam,
                    certified_gap=result.certified_gap,
                    point_norm=float(np.linalg.norm(x)),
                )
            )

        report = DiagnosticsReport(
            family=self.config.problem.family,
            lam=cfg.lam,
            rho=cfg.rho,
            rho_provenance=info.provenance,
            probes=probes,
        )
        b2 = 0.0
        if isinstance(problem, PhaseRetrievalProblem):
            try:
                b2 = critical_set_bound_pr(problem)
                report.critical_set_bound = b2
                report.within_twice_bound = [p.point_norm <= 2.0 * b2 for p in probes]
            except NotApplicableError as e:
                report.critical_set_note = str(e)

        reference = self.reference
        if reference is not None and points:
            x_ref = np.asarray(reference.x_ref)
            references = [x_ref]
            if isinstance(problem, PhaseRetrievalProblem):
                # global sign ambiguity
                references.append(-x_ref)
            report.subregularity = subregularity_probe(problem, references, points)

            solver = self.config.solver
            constants = problem.linear_bound_constants()
            x0 = self.initial_point(solver.seed)
            bounds, _ = theory_bounds(
                constants.l1,
                constants.l2,
                cfg.rho,
                cfg.lam,
                self.n_blocks,
                square_summable_bound(solver.delta),
                float(np.linalg.norm(x0 - x_ref)),
                float(np.linalg.norm(x_ref)),
                b2,
                solver.delta,
                horizon=self.iterations,
                kappa2=solver.kappa2,
                kappa3=solver.kappa3,
            )
            report.theory = bounds
        return report
