"""
rqso: random iteration of Volterra quadratic stochastic operators.

Submodules
----------
simplex     probability-simplex points, vertex distances, vertex neighborhoods
volterra    Volterra operators, heredity tensors, extremal and squaring operators
dynamics    operator ensembles, random trajectories, log-drift constants
drift       escape bounds and simulation for positive-drift processes
attractor   two-sided environments, cocycle and pullback convergence
campaign    JSON configs, deterministic parallel campaigns, CSV/JSONL output
cli         the ``rqso`` command
"""
from .simplex import (barycenter, distance_to_vertices, in_neighborhood, validate, vertex,
                      vertex_distance)
from .volterra import (VolterraOperator, apply, check_doubling_bound, enumerate_extremal,
                       extremal_operator, matrix_from_tensor, squaring_operator, tensor_from_matrix)
from .dynamics import (DriftConstants, OperatorEnsemble, TrajectoryRecord, derive_constants,
                       estimate_block_success, hitting_time_U_epsilon, run_deterministic_trajectory,
                       run_random_trajectory, sample_operator)
from .drift import (DriftProcessSpec, choose_escape_constants, evaluate_f, evaluate_g,
                    simulate_drift_process)
from .attractor import (TwoSidedEnvironment, check_point_attractor, evaluate_cocycle,
                        pullback_distance)

__version__ = "0.1.0"
