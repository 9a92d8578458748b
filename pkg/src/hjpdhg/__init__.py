"""Grid-free Hamilton-Jacobi solvers from primal-dual splitting of Lax and Hopf objectives."""

from .core import (
    ConfigError,
    DivergenceError,
    PdhgConfig,
    SolveReport,
    TimeGrid,
    TrajectoryBundle,
    make_time_grid,
    random_init,
)
from .pdhg_dg import solve_hopf_dg, solve_lax_dg
from .pdhg_oc import kkt_residual_oc, solve_hopf_oc, solve_lax_oc
from .problems import REGISTRY, get_problem

__version__ = "0.1.0"
