from rcsopt.core import BlockPartition, RngState, make_partition  # noqa: F401
from rcsopt.experiment import Experiment  # noqa: F401
from rcsopt.problems import (  # noqa: F401
    MEstimatorProblem,
    PhaseRetrievalProblem,
    SvmProblem,
    build_problem,
)
from rcsopt.solver import SolverConfig, rcs_run, subgrad_run  # noqa: F401
