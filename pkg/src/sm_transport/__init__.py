"""Pathwise transport equations driven by continuous stochastic measures.

Noise paths, symmetric integrals, characteristic flows, weak-form residuals
and the numerical pieces of the uniqueness argument, with a refinement-study
harness on top.
"""

from .errors import (ConfigurationError, DomainTruncationWarning, FlowRangeError, FlowSolverError,
                     GenerationError, PreconditionError, ResolutionError)
from .flow import (DriftField, FlowField, SpatialGrid, audit_tail_condition, bump_drift,
                   constant_drift, evaluate_flow, flow_derivative, invert_flow, linear_drift,
                   sine_drift, solve_flow, zero_drift)
from .noise import (NoiseKind, NoisePath, NoiseSpec, TimeGrid, deterministic_path,
                    empirical_covariance, sample_path, theoretical_covariance)
from .report import ConvergenceReport
from .symint import (Integrand, ParamIntegrand, RefinementLadder, XQuadrature, antiderivative,
                     chain_rule_rhs, chain_rule_study, fubini_check, symmetric_sum)
from .transport import (FrozenField, InitialDatum, SolutionField, TestBump, TransportScenario,
                        bump_datum, default_battery, residual_study, smoothed_step, solve_transport,
                        weak_residual, weak_residuals, zero_datum)
from .uniqueness import (Cutoff, Mollifier, ShiftedField, commutator, commutator_decay,
                         energy_identity_check, gronwall_bound, mollify, uniqueness_pipeline)

__version__ = "0.1.0"
