"""Structure-preserving integration for Hamiltonian systems with equality
and hard inequality constraints, plus the baseline methods they are
usually compared against."""

from .errors import (ConfigurationError, InfeasibleStepError, PredictorError,
                     ReflectionError, SolverError, StepFailure, VarimpactError)
from .sysmodel import (Constraint, MechanicalSystem, PhaseState,
                       constraint_gradient_matrix, constraint_values,
                       hamiltonian)
from .quadrature import (MIDPOINT, VERLET, Quadrature, d1, d2,
                         discrete_lagrangian, modified_hamiltonian_verlet)
from .cones import (DEFAULT_TOL, Tolerances, active_set, equality_projector,
                    extended_active_set, in_tangent_cone,
                    projected_active_gradient, smooth_set)
from .reflection import (ContinuousH, ReflectionResult, VerletNumericalH,
                         energy_projection_nnls, generalized_reflection,
                         moreau_reflection, nonneg_lstsq)
from .solvers import (forward_predictor, momentum_update_solve,
                      position_update_solve, time_of_impact)
from .integrators import (IntegratorConfig, collision_step,
                          direct_midpoint_step, dsi_step,
                          extended_reflection_step, gvi_linearized_step,
                          gvi_step, make_stepper, newmark_step, simulate)
from .scenarios import SCENARIO_NAMES, ScenarioSpec, build_scenario
from .diagnostics import (DiagnosticRecord, RunningEnvelope, Trace,
                          envelope_stats, record, run_trace,
                          scalar_angular_momentum)

__version__ = "0.1.0"
