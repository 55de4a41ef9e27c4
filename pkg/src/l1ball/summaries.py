"""Posterior summaries for exactly sparse samples.

All reductions work on ``SampleRecord`` lists produced by the sampler.
Zero comparisons use literal equality: the projection writes literal
zeros, so no epsilon thresholding is needed (or wanted — it would blur
the exact-sparsity semantics).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DomainError, InputError


@dataclass
class SampleSet:
    """Posterior sample records plus the functional g(theta) to
    summarize (identity when None)."""

    records: list
    functional: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if len(self.records) < 1:
            raise InputError("sample set must contain at least one record")

    def g_matrix(self):
        g = self.functional if self.functional is not None else (lambda t: t)
        return np.asarray([np.ravel(g(rec.theta)) for rec in self.records])


def frechet_mean(samples: SampleSet):
    """Sample-restricted Fréchet mean under squared Euclidean distance
    on g(theta).

    Returns the record minimizing sum_k ||g(theta_j) - g(theta_k)||^2;
    ties break to the lowest index.  Because the output is an actual
    posterior draw it is exactly sparse, unlike a coordinate-wise mean.
    """
    G = samples.g_matrix()
    m = G.shape[0]
    sq = np.sum(G**2, axis=1)
    # sum_k ||G_j - G_k||^2 = m ||G_j||^2 - 2 G_j . S + const
    cost = m * sq - 2.0 * G @ np.sum(G, axis=0)
    return samples.records[int(np.argmin(cost))]


def top_density_region(samples: SampleSet, alpha):
    """Membership flags for the top-(1-alpha) posterior density region.

    kappa_alpha is the empirical alpha-quantile (lower interpolation) of
    the stored log posterior kernels; records at or above it are flagged.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie strictly between 0 and 1")
    log_k = np.asarray([rec.log_posterior for rec in samples.records])
    # lower (floor) convention: kappa is the (floor(alpha*m)+1)-th
    # smallest kernel, so exactly m - floor(alpha*m) records are flagged
    # on tie-free inputs
    idx = min(int(np.floor(alpha * log_k.size)), log_k.size - 1)
    kappa = float(np.sort(log_k)[idx])
    return log_k >= kappa, kappa


def cardinality_posterior(samples: SampleSet, key=None):
    """Empirical pmf of the per-sample cardinality, over {0..p}.

    By default counts exact non-zeros of theta; ``key`` may name an
    extras entry (e.g. "K" for mixture component counts, "rank" for the
    low-rank model) or be a callable on the record.
    """
    if key is None:
        counts = np.asarray(
            [int(np.sum(rec.theta != 0.0)) for rec in samples.records]
        )
        p = max(rec.theta.size for rec in samples.records)
    elif callable(key):
        counts = np.asarray([int(key(rec)) for rec in samples.records])
        p = int(counts.max())
    else:
        counts = np.asarray([int(rec.extras[key]) for rec in samples.records])
        p = int(counts.max())
    pmf = np.bincount(counts, minlength=p + 1) / counts.size
    return pmf


def zero_probability_map(samples: SampleSet):
    """Per-coordinate posterior frequency of theta_i = 0 (exact)."""
    theta = np.asarray([rec.theta for rec in samples.records])
    return np.mean(theta == 0.0, axis=0)


def summarize(samples: SampleSet, alpha=0.05, diagnostics=None, cardinality_key=None):
    """Assemble the JSON-serializable summary document."""
    rep = frechet_mean(samples)
    flags, kappa = top_density_region(samples, alpha)
    doc = {
        "frechet_mean": rep.theta.tolist(),
        "frechet_mean_r": float(rep.r),
        "kappa_alpha": kappa,
        "alpha": alpha,
        "top_region_fraction": float(np.mean(flags)),
        "cardinality_pmf": cardinality_posterior(samples, key=cardinality_key).tolist(),
        "zero_prob_map": zero_probability_map(samples).tolist(),
        "diagnostics": diagnostics if diagnostics is not None else {},
    }
    return doc


def write_summary(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def read_summary(path):
    with open(path) as fh:
        return json.load(fh)
