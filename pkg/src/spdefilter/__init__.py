"""Backward-SPDE nonlinear filtering with Monte Carlo and Kalman-Bucy cross-checks."""
from . import model
from .experiment import load_config, parse_config, run_convergence_study, run_filter_experiment
from .filtering import (
    FilterEstimate,
    filter_estimate_spde,
    girsanov_log_weight,
    kalman_bucy_oracle,
    particle_ks_estimate,
)
from .flow import (
    check_evolution_identity,
    flow_derivatives,
    lemma1_residual,
    simulate_flow,
    simulate_system,
)
from .model import CoefficientFn, FlowModel, SystemModel
from .paths import (
    BrownianPath,
    SampledProcess,
    TimeGrid,
    backward_ito_integral,
    ito_integral,
    sample_brownian,
    time_reverse,
)
from .spde import (
    NumericalError,
    ScalarField,
    SpatialGrid,
    evaluate_field,
    solve_backward,
    solve_backward_flow_expectation,
)

__version__ = "0.1.0"

__all__ = [
    "model",
    "load_config", "parse_config", "run_convergence_study", "run_filter_experiment",
    "FilterEstimate", "filter_estimate_spde", "girsanov_log_weight", "kalman_bucy_oracle",
    "particle_ks_estimate",
    "check_evolution_identity", "flow_derivatives", "lemma1_residual", "simulate_flow",
    "simulate_system",
    "CoefficientFn", "FlowModel", "SystemModel",
    "BrownianPath", "SampledProcess", "TimeGrid", "backward_ito_integral", "ito_integral",
    "sample_brownian", "time_reverse",
    "NumericalError", "ScalarField", "SpatialGrid", "evaluate_field", "solve_backward",
    "solve_backward_flow_expectation",
]
