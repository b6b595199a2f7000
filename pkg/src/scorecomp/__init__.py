"""Composition of score fields from diffusion and flow-matching policies."""
from .compose import (
    CompositionSpec,
    and_weights,
    cfg_compose,
    compose,
    convex_compose,
    convex_field,
    or_weights,
)
from .oracle import (
    EstimatorSpec,
    GaussianMixture,
    ScoreField,
    make_estimator,
    oracle_field,
    oracle_logdensity,
    oracle_score,
)
from .param import Prediction, as_score_field, convert
from .sampler import OdeDynamics, sample, simulate_pair
from .schedule import NoiseSchedule, alpha_sigma, step_coefficients

__version__ = "0.1.0"
