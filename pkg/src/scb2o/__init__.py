"""Soft-quantile consensus-based bi-level optimisation."""

__version__ = "0.1.0"

from .core import (AlgorithmParams, Ensemble, GeometryConstants, ObjectiveBounds, ObjectiveSpec,
                   SIGMOID, Selector, Sigmoid, clip_objective, sigmoid_selector)
from .errors import (ConfigError, ConstraintError, DivergenceError, DomainError, InvariantError,
                     SCB2OError, SolverError)
from .quantile import (QuantileSolution, StabilityConstants, eta_weights, hard_quantile,
                       inverse_stability_slack, kappa_bound, soft_quantile)
from .consensus import (ConsensusReport, compute_consensus, consensus_moment_witness,
                        consensus_point, hard_consensus_point)
from .dynamics import (InitSpec, NoiseSource, RunConfig, RunMetrics, em_step, run,
                       variance_scaling_study)
from .bench import get_benchmark, particle_spread
from .diagnostics import (cutoff_monitor, decay_rate_fit, laplace_bound_check, mass_bound_check,
                          theory_constants)
