"""Sticky-HDP hidden Markov model with a step-and-turn-with-attractive-point
emission for 2-D trajectory data."""

from .geometry import (Ellipse, MovementMetrics, Path, atan_star,
                       ellipse_contour, metrics_to_path, path_to_metrics,
                       rotation)
from .stap_core import (StapParams, StepMoments, metric_loglik, sample_step,
                        stap_logdensity, stap_moments)
from .priors import (PriorConfig, rho_prior_cdf, sample_hdp_hyper_prior,
                     sample_rho_prior, sample_stap_prior)
from .hmm_sampler import HmmState, McmcSchedule, SufficientStats, run_mcmc
from .diagnostics import (PosteriorDraws, Summary, accuracy, dic5, icl,
                          loglik_metrics, map_states, posterior_K,
                          predictive_metrics, summarize)
from .simulator import (SimConfig, WcCrwConfig, hmm_preset, simulate_from_posterior,
                        simulate_hmm, simulate_wc_crw, subsample_path, wc_preset)

__version__ = "0.1.0"
