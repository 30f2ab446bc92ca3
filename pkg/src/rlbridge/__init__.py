"""Gaussian-Markov bridges of random length: simulation and exact inference on the length."""
from .bayes import (Observation, PosteriorMeasure, PredictiveLaw, expect_joint, filtration_estimate,
                    phi_weight, posterior_multi, posterior_single, predict, predict_multi)
from .bridge import BridgeSpec, GaussianKernel, bridge_covariance, joint_density, transition_kernel
from .covariance import CovarianceModel, brownian, ou_from_zero, scaled_brownian, tabulated
from .errors import (BridgeError, DomainError, InconsistentObservationError, InsufficientSampleError,
                     IntegrityError, NumericalError, PreconditionError)
from .kernels import BACKEND
from .length_law import LengthLaw
from .random_bridge import BridgePath, PathBatch, sample_random_bridge, simulate, zero_set_detector

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BridgeError",
    "BridgePath",
    "BridgeSpec",
    "CovarianceModel",
    "DomainError",
    "GaussianKernel",
    "InconsistentObservationError",
    "InsufficientSampleError",
    "IntegrityError",
    "LengthLaw",
    "NumericalError",
    "Observation",
    "PathBatch",
    "PosteriorMeasure",
    "PreconditionError",
    "PredictiveLaw",
    "bridge_covariance",
    "brownian",
    "expect_joint",
    "filtration_estimate",
    "joint_density",
    "ou_from_zero",
    "phi_weight",
    "posterior_multi",
    "posterior_single",
    "predict",
    "predict_multi",
    "sample_random_bridge",
    "scaled_brownian",
    "simulate",
    "tabulated",
    "transition_kernel",
    "zero_set_detector",
]
