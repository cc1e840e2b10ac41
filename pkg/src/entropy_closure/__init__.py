"""Minimal entropy closures for kinetic moment systems.

Newton and input-convex neural network closures for the Maxwell-Boltzmann
entropy, realizable-set sampling, and a first-order kinetic solver.
"""
from .entropy import (
    alpha_zero_from_reduced, assemble_alpha, dual_gradient, dual_hessian, dual_objective,
    entropy_functional, eta, eta_prime, eta_star, eta_star_prime, reconstruct_density,
    rescale_alpha,
)
from .errors import (
    BoundaryProximityError, ClosureError, ConvergenceError, DatasetFormatError, DomainError,
    ModelFormatError, RangeError, RealizabilityError, SamplingError,
)
from .icnn import IcnnModel, infer_normalized, infer_scaled, load_model, save_model
from .newton import NewtonConfig, solve_dual, solve_dual_batch
from .quadrature import MomentBasis, build_gauss_legendre, build_projected_sphere, moments_of
from .realizability import check, margins
from .sampling import (
    Dataset, SamplerConfig, read_dataset, sample_uniform_alpha, sample_uniform_moments,
    write_dataset,
)
from .solver import case_defaults, run_case, run_compare
from .training import TrainConfig, train

__version__ = "0.1.0"
