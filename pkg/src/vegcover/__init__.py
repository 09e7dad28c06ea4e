"""Bayesian cover-type prediction from reflectance time series and landscape covariates."""

from .artifact import PosteriorArtifact
from .basis import (BasisMatrix, KnotSet, RankReport, TPSBasis, check_spatial_identifiability, eval_tps_basis,
                    fit_tps_basis, make_quantile_knots, make_regular_knots)
from .config import RunConfig
from .errors import ConfigError, NumericalError, VegcoverError
from .likelihood import (PreparedData, SiteBlock, SiteStats, logit_transform, loglik_labeled_site,
                         loglik_unlabeled_site, total_loglik)
from .model import ParameterState, PriorSpec, cover_probabilities, log_prior, sample_prior
from .predict import (SitePrediction, marginal_probability_curves, predict_exact_joint, predict_marginal,
                      summarize_B)
from .sampler import ChainConfig, ChainOutput, PosteriorDraws, effective_sample_size, run_chain, slice_update_scalar
from .simulate import SyntheticScenario, simulate

__version__ = "0.1.0"
