"""Backward-factorized variational smoothing for state-space models.

Exact Gaussian inference, recursive and closed-form evidence lower bounds,
amortized inference networks for nonlinear emissions, particle-based
backward-simulation smoothing, and an exact finite-state verifier for the
additive-smoothing error bound.
"""

__version__ = "0.1.0"

from .errors import (
    BvsmoothError,
    DegenerateModel,
    DimMismatch,
    InvalidMixingConstants,
    LengthMismatch,
    NonFiniteValue,
    NotPositiveDefinite,
    UnsupportedFunctionalForm,
    UnsupportedPrimitive,
    WeightCollapse,
)
from .gaussian import Gaussian, NaturalGaussian, PairwiseGaussian
from .models import LatentDynamics, LGParams, NonlinearEmission, Trajectory
from .kalman import FilterSequence, LinearBackwardKernel, kalman_filter, backward_kernels, smoother_pass, smoothed_additive
from .variational import (
    BackwardVariational,
    MismatchProfile,
    additive_error_bound,
    elbo_closed_form,
    elbo_recursive,
    lg_posterior_family,
    mismatch_profile_linear,
    variational_smoothed_additive,
)
from .functionals import AdditiveFunctional, eval_additive, pair_product, state_sum
