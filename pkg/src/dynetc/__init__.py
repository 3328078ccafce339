"""Static and dynamic event-triggered control: simulation and benchmark harness."""

from .kinf import KInfFunction, check_kinf, eval_kinf, ksum, linear, power
from .plant import (LinearPlant, NonlinearProblem, closed_loop_field_linear, decay_rate_kappa,
                    grad_V_dot_f, lyapunov_value, nonlinear_problem, benchmark_plant, wrap_linear)
from .sim import (SimConfig, Trajectory, first_execution_time, locate_event,
                  performance_bound_check, rk4_step, simulate)
from .stats import (BatchSpec, RunStats, circle_initial_conditions, figure_series,
                    inter_execution_stats, benchmark_grid, run_table)
from .triggers import (DynamicGenerator, GeneratorState, StaticGenerator, dynamic_trigger_value,
                       error_vector, eta_derivative, on_execution, static_trigger_value_linear,
                       static_trigger_value_nonlinear)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
