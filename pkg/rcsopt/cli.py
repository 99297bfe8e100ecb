import contextlib
import logging
import os
import sys

import click
import numpy as np
from pydantic import ValidationError

from rcsopt.__version__ import __version__
from rcsopt.config import RConfig
from rcsopt.datasets import (
    Dataset,
    MEstimatorGenConfig,
    PrGenConfig,
    SvmGenConfig,
    generate_mestimator_data,
    generate_pr_instance,
    generate_svm_data,
    read_pgm,
    write_dataset,
)
from rcsopt.errors import DivergenceError, RcsError
from rcsopt.experiment import Experiment, load_points
from rcsopt.models import ExperimentConfig
from rcsopt.problems import SUPPORTED_FAMILIES
from rcsopt.utils import drop_none, nested_update, parse_seed_range
from rcsopt.write_files import write_model

logging.basicConfig()


SUPPORTED_METHODS = ["rcs", "subgrad"]
SUPPORTED_SCHEDULES = ["sqrtlog", "qg", "horizon"]


@contextlib.contextmanager
def cli_errors():
    """Maps library errors onto exit codes: 2 for divergence, 1 for everything else"""
    try:
        yield
    except DivergenceError as e:
        click.echo(f"Diverged: {e}")
        sys.exit(2)
    except FileNotFoundError as not_found:
        click.echo(
            f"Missing {not_found.filename}. Make sure the path is correct and the file exists"
        )
        sys.exit(1)
    except (RcsError, ValidationError, ValueError) as e:
        click.echo(f"Error: {e}")
        sys.exit(1)


def experiment_options(f):
    """Flags shared by run, reference and diagnose; each overrides the --config file"""
    options = [
        click.option("-c", "--config", "config_path", type=click.Path()),
        click.option("--profile", "profile", envvar="RCSOPT_PROFILE"),
        click.option("--family", type=click.Choice(SUPPORTED_FAMILIES)),
        click.option("--data", "data", type=click.Path()),
        click.option("--loss", type=click.Choice(["l1", "mcp"])),
        click.option("--p", "p", type=float),
        click.option("--p1", "p1", type=float),
        click.option("--p2", "p2", type=float),
        click.option("--method", type=click.Choice(SUPPORTED_METHODS)),
        click.option("--blocks", type=int),
        click.option("--schedule", type=click.Choice(SUPPORTED_SCHEDULES)),
        click.option("--delta", type=float),
        click.option("--kappa2", type=float),
        click.option("--kappa3", type=float),
        click.option("--cap", type=float),
        click.option("--seed", type=int),
        click.option("--epochs", type=int),
        click.option("--record-every", "record_every", type=int),
        click.option("--init", type=click.Choice(["zero", "random"])),
        click.option("--lam", type=float),
        click.option("--probe-every", "probe_every", type=int),
        click.option("--inner-budget", "inner_budget", type=int),
        click.option("--reference", "reference", type=click.Path()),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def build_experiment_config(config_path=None, profile=None, **flags) -> ExperimentConfig:
    settings = RConfig(path=config_path, profile=profile).as_dict()
    overrides = drop_none(
        {
            "problem": {
                "family": flags.get("family"),
                "data": flags.get("data"),
                "loss": flags.get("loss"),
                "p": flags.get("p"),
                "p1": flags.get("p1"),
                "p2": flags.get("p2"),
            },
            "solver": {
                "method": flags.get("method"),
                "blocks": flags.get("blocks"),
                "schedule": flags.get("schedule"),
                "delta": flags.get("delta"),
                "kappa2": flags.get("kappa2"),
                "kappa3": flags.get("kappa3"),
                "cap": flags.get("cap"),
                "seed": flags.get("seed"),
                "epochs": flags.get("epochs"),
                "record_every": flags.get("record_every"),
                "init": flags.get("init"),
            },
            "diagnostics": {
                "lam": flags.get("lam"),
                "probe_every": flags.get("probe_every"),
                "inner_budget": flags.get("inner_budget"),
            },
            "output": {
                "trace": flags.get("trace"),
                "summary": flags.get("summary"),
                "pgm": flags.get("pgm_out"),
            },
            "reference": flags.get("reference"),
        }
    )
    # a data file on the command line replaces generator settings from the config file
    if "data" in overrides.get("problem", {}):
        settings.get("problem", {}).pop("generate", None)
    return ExperimentConfig.model_validate(nested_update(settings, overrides))


@click.group()
@click.option("--debug", is_flag=True)
def main(debug):
    if debug:
        click.echo("Debug mode is 'on'\n")
        os.environ["RCSOPT_LOG_LEVEL"] = "DEBUG"
        for name in logging.root.manager.loggerDict:
            if name.startswith("rcsopt"):
                logging.getLogger(name).setLevel(logging.DEBUG)


@main.command()
def version():
    """current rcsopt version"""
    click.echo(__version__)


def datagen_command(f):
    f = click.option("-f", "--force", "force", is_flag=True)(f)
    return click.option("-o", "--out", "out", required=True, type=click.Path())(f)


@main.group()
def datagen():
    """generate synthetic datasets"""


@datagen.command("mestimator")
@click.option("--n", "n", type=int, required=True)
@click.option("--d", "d", type=int, required=True)
@click.option("--s", "s", type=int, required=True)
@click.option("--pfail", "p_fail", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@datagen_command
def datagen_mestimator(n, d, s, p_fail, seed, out, force):
    """Gaussian regression data with sparse truth and gross outliers"""
    with cli_errors():
        cfg = MEstimatorGenConfig(n=n, d=d, s=s, p_fail=p_fail, seed=seed)
        A, b, x_star = generate_mestimator_data(cfg)
        dataset = Dataset("mestimator", A, b, x_star, cfg.model_dump())
        write_dataset(out, dataset, force=force)
        click.echo(f"wrote {out} (n={n}, d={d})")


@datagen.command("svm")
@click.option("--n", "n", type=int, required=True)
@click.option("--d", "d", type=int, required=True)
@click.option("--seed", type=int, default=0)
@datagen_command
def datagen_svm(n, d, seed, out, force):
    """Linearly separable classification data"""
    with cli_errors():
        cfg = SvmGenConfig(n=n, d=d, seed=seed)
        A, b, w_star = generate_svm_data(cfg)
        write_dataset(out, Dataset("svm", A, b, w_star, cfg.model_dump()), force=force)
        click.echo(f"wrote {out} (n={n}, d={d})")


@datagen.command("pr")
@click.option("--d", "d", type=int)
@click.option("--m", "m", type=int, required=True)
@click.option("--pfail", "p_fail", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@click.option("--clip-outliers", "clip_outliers", is_flag=True)
@click.option("--image", "image", type=click.Path(exists=True))
@datagen_command
def datagen_pr(d, m, p_fail, seed, clip_outliers, image, out, force):
    """Phase retrieval data from a randomly signed Hadamard design"""
    with cli_errors():
        x_star = None
        image_config = None
        if image:
            x_star, width, height = read_pgm(image)
            if d is not None and d != x_star.size:
                raise ValueError(f"--d {d} does not match the {width}x{height} image")
            d = x_star.size
            image_config = {"path": str(image), "width": width, "height": height}
        if d is None:
            raise ValueError("--d is required without --image")
        cfg = PrGenConfig(d=d, m=m, p_fail=p_fail, seed=seed, clip_outliers=clip_outliers)
        A, b_sq, x_star = generate_pr_instance(cfg, x_star=x_star)
        config = cfg.model_dump()
        if image_config:
            config["image"] = image_config
        write_dataset(out, Dataset("pr", A, b_sq, x_star, config), force=force)
        click.echo(f"wrote {out} (n={A.shape[0]}, d={d})")


@main.command()
@experiment_options
@click.option("--trace", "trace", type=click.Path())
@click.option("--summary", "summary", type=click.Path())
@click.option("--pgm-out", "pgm_out", type=click.Path())
@click.option("--seeds", "seeds")
@click.option("--threads", "threads", type=int, envvar="RCS_THREADS")
def run(seeds, threads, **flags):
    """run RCS or the full subgradient method and write the trace and summary"""
    with cli_errors():
        experiment = Experiment(build_experiment_config(**flags))
        if seeds:
            seed_list = parse_seed_range(seeds)
            if len(seed_list) > 1:
                sweep = experiment.run_sweep(seed_list, threads=threads)
                for entry in sweep.runs:
                    click.echo(f"seed {entry.seed}: f={entry.final_objective:.8g}")
                return
            flags["seed"] = seed_list[0]
            experiment = Experiment(build_experiment_config(**flags))
        summary = experiment.run().summary
        message = f"{summary.method}: {summary.iterations} iterations, f={summary.final_objective:.8g}"
        if summary.final_gap is not None:
            message += f", gap={summary.final_gap:.4g}"
        click.echo(message)


@main.command()
@experiment_options
@click.option("-o", "--out", "out", required=True, type=click.Path())
@click.option("--budget", type=int, default=10000)
@click.option("--starts", type=int, default=5)
def reference(out, budget, starts, **flags):
    """estimate f* with long full subgradient runs from several starts"""
    with cli_errors():
        if budget < 0 or starts < 1:
            raise ValueError("--budget must be >= 0 and --starts >= 1")
        experiment = Experiment(build_experiment_config(**flags))
        solution = experiment.compute_reference(budget, seeds=starts)
        write_model(out, solution)
        click.echo(f"f* = {solution.f_star:.10g} written to {out}")


@main.command()
@experiment_options
@click.option("-o", "--out", "out", required=True, type=click.Path())
@click.option("--points", "points_path", type=click.Path())
def diagnose(out, points_path, **flags):
    """envelope gradients, critical-set bound and subregularity ratios"""
    with cli_errors():
        experiment = Experiment(build_experiment_config(**flags))
        if points_path:
            points = load_points(points_path)
        else:
            points = [experiment.initial_point(experiment.config.solver.seed)]
            if experiment.reference is not None:
                points.append(np.asarray(experiment.reference.x_ref))
        report = experiment.diagnose(points)
        write_model(out, report)
        for probe in report.probes:
            click.echo(
                f"point {probe.index}: ‖∇f_λ‖ = {probe.envelope_gradient_norm:.4g} ± {probe.error_bar:.2g}"
            )
        if report.critical_set_bound is not None:
            click.echo(f"critical set bound B2 = {report.critical_set_bound:.6g}")
