"""Bayesian sparse inference with l1-ball projection priors."""

from .projection import (
    GeneralizedBall,
    admm_project,
    nuclear_project,
    project_ball,
    project_l1_ball,
    project_l1_ball_batch,
)
from .sampler import TargetPosterior, nuts_sample
from .summaries import SampleSet, frechet_mean, summarize

__version__ = "0.1.0"

__all__ = [
    "GeneralizedBall",
    "SampleSet",
    "TargetPosterior",
    "admm_project",
    "frechet_mean",
    "nuclear_project",
    "nuts_sample",
    "project_ball",
    "project_l1_ball",
    "project_l1_ball_batch",
    "summarize",
    "__version__",
]
