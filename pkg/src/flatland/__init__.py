"""Discrete MCMC with entropy-regularized Langevin proposals.

The package couples a discrete sampling chain to a continuous companion
variable so that proposals prefer wide (entropic) modes; the decoupled
limit recovers the usual discrete Langevin samplers.  See the README for
the CLI and configuration format.
"""

from .config import (ExperimentConfig, bundled_configs, load_experiment,
                     preset_hyperparams)
from .diagnostics import (EigenReport, exact_distribution_distance,
                          exact_target_log_probs, finite_difference_hessian,
                          hessian_eigenspectrum, mode_visit_frequencies,
                          pairwise_mismatch_count, regression_rmse,
                          tsp_route_metrics)
from .errors import CapabilityError, ConfigError, NumericError
from .kernels import (GRADIENT_MODES, CoordinateProposal, JointState,
                      SamplerConfig, StepOutcome, all_coordinate_proposals,
                      build_coordinate_proposal, glu_step, joint_energy,
                      joint_gradient, log_q_discrete, make_rng, mh_step,
                      propose_auxiliary, propose_discrete, step,
                      unadjusted_step)
from .models import (BinaryRegressionNetModel, CategoricalPMFModel,
                     EnergyModel, RBMModel, TSPModel, load_model,
                     make_synthetic_regression, model_from_dict)
from .oracle import (exact_kernel_matrix, finite_difference_gradient,
                     stationary_distribution, target_probs)
from .runner import (SAMPLER_NAMES, RunPlan, RunReport, SampleArchive,
                     gibbs_step, gwg_step, run, run_batched, sampler_config)

__version__ = "0.1.0"

__all__ = [
    "BinaryRegressionNetModel", "CapabilityError", "CategoricalPMFModel",
    "ConfigError", "CoordinateProposal", "EigenReport", "EnergyModel",
    "ExperimentConfig", "GRADIENT_MODES", "JointState", "NumericError",
    "RBMModel", "RunPlan", "RunReport", "SAMPLER_NAMES", "SampleArchive",
    "SamplerConfig", "StepOutcome", "TSPModel", "all_coordinate_proposals",
    "build_coordinate_proposal", "bundled_configs",
    "exact_distribution_distance", "exact_kernel_matrix",
    "exact_target_log_probs", "finite_difference_gradient",
    "finite_difference_hessian", "gibbs_step", "glu_step", "gwg_step",
    "hessian_eigenspectrum", "joint_energy", "joint_gradient",
    "load_experiment", "load_model", "log_q_discrete", "make_rng",
    "make_synthetic_regression", "mh_step", "mode_visit_frequencies",
    "model_from_dict", "pairwise_mismatch_count", "preset_hyperparams",
    "propose_auxiliary", "propose_discrete", "regression_rmse", "run",
    "run_batched", "sampler_config", "stationary_distribution", "step",
    "target_probs", "tsp_route_metrics", "unadjusted_step",
]
