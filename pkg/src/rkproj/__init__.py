"""Invariant-preserving projection for explicit Runge-Kutta methods.

The quasi-orthogonal projection corrects each RK update along the part of
the invariant gradient that lies in the span of the stage derivatives.
Orthogonal, relaxation and directional projections are provided for
comparison, together with the benchmark problems and a CLI harness.
"""
from .core import Invariant, OdeProblem, StepRecord, Trajectory, integrate, march, rk_step
from .errors import (DegenerateDirectionError, IntegrationError, RKProjError, StepFailure,
                     UnsolvableProjectionError)
from .problems import (get_problem, make_burgers, make_linear_dissipative, make_nonlinear_oscillator,
                       make_rigid_body, stability_polynomial_rk44)
from .projection import (METHODS, ProjectedStep, ProjectionConfig, conservative_target, direction_directional,
                         direction_orthogonal, direction_quasi_orthogonal, direction_relaxation,
                         dissipative_target, ms_matrix, project_multi, project_step, solve_relaxation,
                         solve_scalar)
from .subspace import GradientSplit, StageBasis, decompose, orthonormalize
from .tableaux import ButcherTableau, builtin_tableaux, get_tableau, tableau_names, verify_order_conditions

__version__ = "0.1.0"
