import csv
import json
import logging

import numpy as np
import pytest

from rcsopt.datasets import Dataset, read_pgm
from rcsopt.errors import InvalidLambdaError, RcsValidationError
from rcsopt.experiment import (
    Experiment,
    distance_to_truth,
    image_shape,
    load_points,
    support,
)
from rcsopt.models import ReferenceProvenance, ReferenceSolution
from rcsopt.schedules import FixedHorizon, QuadraticGrowth, SqrtLog
from rcsopt.write_files import TRACE_COLUMNS, write_model


def mestimator_settings(**solver):
    return {
        "problem": {
            "family": "mestimator",
            "generate": {"n": 30, "d": 6, "s": 2, "p_fail": 0.1, "seed": 1},
            "p2": 0.05,
        },
        "solver": {"blocks": 3, "epochs": 5, **solver},
    }


def pr_settings():
    return {
        "problem": {"family": "pr", "generate": {"d": 8, "m": 4, "seed": 2}},
        "solver": {"epochs": 2},
        "diagnostics": {"inner_budget": 500},
    }


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestExperiment:
    def test_iterations_are_epochs_times_blocks(self):
        experiment = Experiment.from_settings(mestimator_settings())
        assert experiment.n_blocks == 3
        assert experiment.iterations == 15

    def test_blocks_default_to_dimension(self):
        settings = mestimator_settings()
        del settings["solver"]["blocks"]
        assert Experiment.from_settings(settings).n_blocks == 6

    def test_subgrad_single_block(self):
        experiment = Experiment.from_settings(mestimator_settings(method="subgrad"))
        assert experiment.n_blocks == 1
        assert experiment.iterations == 5

    def test_schedules(self):
        assert isinstance(Experiment.from_settings(mestimator_settings()).schedule(), SqrtLog)
        qg = Experiment.from_settings(mestimator_settings(schedule="qg", kappa3=2.0))
        assert isinstance(qg.schedule(), QuadraticGrowth)
        assert qg.schedule().n_blocks == 3
        horizon = Experiment.from_settings(mestimator_settings(schedule="horizon"))
        assert isinstance(horizon.schedule(), FixedHorizon)
        assert horizon.schedule().horizon == 15

    def test_qg_needs_kappa3(self):
        experiment = Experiment.from_settings(mestimator_settings(schedule="qg"))
        with pytest.raises(RcsValidationError):
            experiment.schedule()

    def test_horizon_cap_from_kappa2(self):
        experiment = Experiment.from_settings(pr_settings())
        experiment.config.solver.schedule = "horizon"
        experiment.config.solver.kappa2 = 1.0
        assert experiment.schedule().cap is not None

    def test_generated_dataset_is_deterministic(self):
        a = Experiment.from_settings(mestimator_settings()).dataset
        b = Experiment.from_settings(mestimator_settings()).dataset
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.b, b.b)

    def test_missing_data(self):
        settings = mestimator_settings()
        settings["problem"].pop("generate")
        with pytest.raises(RcsValidationError):
            Experiment.from_settings(settings).dataset

    def test_random_init(self):
        experiment = Experiment.from_settings(mestimator_settings(init="random"))
        x0 = experiment.initial_point(4)
        assert np.array_equal(x0, experiment.initial_point(4))
        assert np.any(x0 != 0.0)
        assert not np.any(Experiment.from_settings(mestimator_settings()).initial_point(4))

    def test_pr_starts_at_random_point(self):
        experiment = Experiment.from_settings(pr_settings())
        assert experiment.init == "random"
        assert np.any(experiment.initial_point(0) != 0.0)
        assert Experiment.from_settings(mestimator_settings()).init == "zero"

    def test_random_start_differs_from_truth(self):
        settings = pr_settings()
        settings["problem"]["generate"]["seed"] = 0
        experiment = Experiment.from_settings(settings)
        x_star = experiment.dataset.x_star
        x0 = experiment.initial_point(0)
        assert distance_to_truth(x0, x_star, sign_ambiguous=True) > 0.1 * np.linalg.norm(x_star)

    def test_pr_zero_start_warns(self, caplog):
        settings = pr_settings()
        settings["solver"]["init"] = "zero"
        experiment = Experiment.from_settings(settings)
        with caplog.at_level(logging.WARNING, logger="rcsopt.experiment"):
            x0 = experiment.initial_point(0)
        assert not np.any(x0)
        assert "critical point" in caplog.text


class TestRun:
    def test_outputs(self, tmp_path):
        settings = mestimator_settings()
        settings["output"] = {
            "trace": str(tmp_path / "trace.csv"),
            "summary": str(tmp_path / "summary.json"),
            "pgm": str(tmp_path / "x.pgm"),
        }
        result = Experiment.from_settings(settings).run()
        rows = read_rows(tmp_path / "trace.csv")
        assert list(rows[0].keys()) == TRACE_COLUMNS
        assert len(rows) == 15
        # no reference, so the gap column stays empty
        assert all(row["gap"] == "" for row in rows)

        with open(tmp_path / "summary.json") as f:
            summary = json.load(f)
        assert summary["iterations"] == 15
        assert summary["n_blocks"] == 3
        assert summary["f_star"] is None
        assert summary["final_objective"] == pytest.approx(result.summary.final_objective)
        assert summary["workspace_bytes_per_iter"] == 8 * 30 + 8 * 2

        _, width, height = read_pgm(tmp_path / "x.pgm")
        assert (width, height) == (6, 1)

    def test_zero_epochs(self, tmp_path):
        settings = mestimator_settings(epochs=0)
        settings["output"] = {"trace": str(tmp_path / "trace.csv")}
        result = Experiment.from_settings(settings).run()
        assert result.summary.iterations == 0
        assert result.summary.final_objective == result.summary.initial_objective
        assert result.summary.weighted_average_objective is None
        assert (tmp_path / "trace.csv").read_text().splitlines() == [",".join(TRACE_COLUMNS)]

    def test_pr_run_moves_from_start(self):
        experiment = Experiment.from_settings(pr_settings())
        summary = experiment.run().summary
        assert not np.array_equal(summary.final_x, experiment.initial_point(0))
        assert summary.final_objective != summary.initial_objective

    def test_truth_measures(self):
        experiment = Experiment.from_settings(mestimator_settings())
        summary = experiment.run().summary
        x_star = experiment.dataset.x_star
        assert summary.distance_to_truth == pytest.approx(
            np.linalg.norm(np.array(summary.final_x) - x_star)
        )
        assert isinstance(summary.support_recovered, bool)

        pr = Experiment.from_settings(pr_settings())
        x_star = pr.dataset.x_star
        assert pr.truth_measures(-x_star) == (0.0, None)
        assert pr.run().summary.support_recovered is None

    def test_no_truth_measures_for_svm(self):
        settings = {
            "problem": {"family": "svm", "generate": {"n": 20, "d": 4, "seed": 1}, "p": 0.1},
            "solver": {"epochs": 2},
        }
        summary = Experiment.from_settings(settings).run().summary
        assert summary.distance_to_truth is None
        assert summary.support_recovered is None

    def test_probes(self):
        settings = mestimator_settings()
        settings["diagnostics"] = {"probe_every": 5, "inner_budget": 200}
        summary = Experiment.from_settings(settings).run().summary
        assert len(summary.envelope_gradient_norms) == 3

    def test_with_reference(self, tmp_path):
        experiment = Experiment.from_settings(mestimator_settings())
        reference = experiment.compute_reference(200, seeds=2)
        write_model(tmp_path / "ref.json", reference)

        settings = mestimator_settings()
        settings["reference"] = str(tmp_path / "ref.json")
        settings["output"] = {"trace": str(tmp_path / "trace.csv")}
        summary = Experiment.from_settings(settings).run().summary
        assert summary.f_star == reference.f_star
        assert summary.final_gap == pytest.approx(summary.final_objective - reference.f_star)
        assert summary.reference_provenance.seed_count == 2
        rows = read_rows(tmp_path / "trace.csv")
        assert float(rows[0]["gap"]) == pytest.approx(float(rows[0]["f"]) - reference.f_star)

    def test_reference_dimension_mismatch(self, tmp_path):
        reference = ReferenceSolution(
            family="mestimator",
            f_star=0.0,
            x_ref=[0.0, 0.0],
            provenance=ReferenceProvenance(
                method="subgrad", iterations=1, seed_count=1, schedule="sqrtlog"
            ),
        )
        write_model(tmp_path / "ref.json", reference)
        settings = mestimator_settings()
        settings["reference"] = str(tmp_path / "ref.json")
        with pytest.raises(RcsValidationError):
            Experiment.from_settings(settings).run()


class TestSweep:
    def test_per_seed_outputs(self, tmp_path):
        settings = mestimator_settings()
        settings["output"] = {
            "trace": str(tmp_path / "trace.csv"),
            "summary": str(tmp_path / "summary.json"),
        }
        experiment = Experiment.from_settings(settings)
        sweep = experiment.run_sweep([1, 2, 3], threads=2)
        assert [r.seed for r in sweep.runs] == [1, 2, 3]
        for seed in (1, 2, 3):
            assert (tmp_path / f"trace.seed{seed}.csv").exists()
            assert (tmp_path / f"summary.seed{seed}.json").exists()
        assert (tmp_path / "summary.sweep.json").exists()

        single = Experiment.from_settings(mestimator_settings()).run(2).summary
        assert sweep.runs[1].final_objective == single.final_objective
        assert sweep.mean_final_objective == pytest.approx(
            np.mean([r.final_objective for r in sweep.runs])
        )

    def test_empty(self):
        with pytest.raises(RcsValidationError):
            Experiment.from_settings(mestimator_settings()).run_sweep([])


class TestReference:
    def test_best_of_starts(self):
        experiment = Experiment.from_settings(mestimator_settings())
        reference = experiment.compute_reference(300, seeds=3)
        problem = experiment.problem
        assert reference.f_star <= problem.objective(np.zeros(problem.d))
        assert reference.f_star == pytest.approx(problem.objective(np.array(reference.x_ref)))
        assert reference.provenance.seed_count == 3
        assert reference.provenance.tail_iterations == 0

    def test_quadratic_growth_tail(self):
        experiment = Experiment.from_settings(mestimator_settings(kappa3=1.0))
        reference = experiment.compute_reference(100, seeds=1)
        assert reference.provenance.tail_iterations == 100

    def test_no_tail_for_weakly_convex(self):
        experiment = Experiment.from_settings(pr_settings())
        experiment.config.solver.kappa3 = 1.0
        reference = experiment.compute_reference(50, seeds=1)
        assert reference.provenance.tail_iterations == 0


class TestDiagnose:
    def test_phase_retrieval(self):
        experiment = Experiment.from_settings(pr_settings())
        report = experiment.diagnose([np.ones(8), np.zeros(8)])
        assert [p.index for p in report.probes] == [0, 1]
        assert report.rho_provenance == "smooth_inner_map"
        assert report.critical_set_bound > 0.0
        assert len(report.within_twice_bound) == 2
        assert report.within_twice_bound[1]
        assert report.subregularity is None

    def test_with_reference(self, tmp_path):
        experiment = Experiment.from_settings(pr_settings())
        x_star = experiment.dataset.x_star
        reference = ReferenceSolution(
            family="pr",
            f_star=0.0,
            x_ref=x_star.tolist(),
            provenance=ReferenceProvenance(
                method="subgrad", iterations=0, seed_count=1, schedule="sqrtlog"
            ),
        )
        write_model(tmp_path / "ref.json", reference)
        settings = pr_settings()
        settings["reference"] = str(tmp_path / "ref.json")
        report = Experiment.from_settings(settings).diagnose([np.ones(8), -x_star])
        # -x* is as close to the solution set as x*
        assert report.subregularity.records[1].dist_to_reference == pytest.approx(0.0, abs=1e-12)
        assert report.theory.b2 == report.critical_set_bound

    def test_convex_family(self):
        report = Experiment.from_settings(mestimator_settings()).diagnose([np.zeros(6)])
        assert report.critical_set_bound is None
        assert report.rho == 0.0
        assert report.lam == 1.0

    def test_invalid_lambda(self):
        settings = pr_settings()
        settings["diagnostics"]["lam"] = 100.0
        with pytest.raises(InvalidLambdaError):
            Experiment.from_settings(settings).diagnose([np.zeros(8)])


class TestHelpers:
    def test_load_points(self, tmp_path):
        path = tmp_path / "points.json"
        path.write_text(json.dumps({"points": [[1.0, 2.0], [3.0, 4.0]]}))
        points = load_points(path)
        assert [p.tolist() for p in points] == [[1.0, 2.0], [3.0, 4.0]]

        path.write_text(json.dumps({"final_x": [5.0]}))
        assert load_points(path)[0].tolist() == [5.0]

    def test_load_points_missing_key(self, tmp_path):
        path = tmp_path / "points.json"
        path.write_text("{}")
        with pytest.raises(RcsValidationError):
            load_points(path)

    def test_image_shape(self):
        def dataset(d, config=None):
            return Dataset("pr", np.zeros((1, d)), np.zeros(1), config=config or {})

        assert image_shape(dataset(16)) == (4, 4)
        assert image_shape(dataset(6)) == (6, 1)
        assert image_shape(dataset(8, {"image": {"width": 4, "height": 2}})) == (4, 2)

    def test_distance_to_truth(self):
        x_star = np.array([3.0, -4.0])
        assert distance_to_truth(x_star, x_star) == 0.0
        assert distance_to_truth(-x_star, x_star) == pytest.approx(10.0)
        assert distance_to_truth(-x_star, x_star, sign_ambiguous=True) == 0.0

    def test_support(self):
        assert support(np.array([1.0, 0.05, -0.5, 0.1])).tolist() == [0, 2]
        assert support(np.zeros(3)).tolist() == []
