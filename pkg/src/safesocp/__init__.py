"""Safe stabilising control from second-order cone constraints under model uncertainty."""

from .constraints import Socc, WorstCaseModel, embed_worstcase, exact_model, worstcase_soccs
from .core import (AffineDynamics, Barrier, CbfSpec, ClassK, ClfSpec, ball_barrier, linear_dynamics,
                   planar_system, quadratic_clf)
from .estimation import Dataset, LipschitzConstants, Oracle, build_worstcase_model
from .feasibility import BoundB, CompatMargins, check_gp_compat, check_worstcase_compat
from .sim import SimConfig, Trajectory, simulate
from .socp import SoccProgram, SolveResult, SolverConfig, Status, phase1, solve_min_norm
from .universal import universal_control, universal_control_worstcase

__version__ = "0.1.0"
