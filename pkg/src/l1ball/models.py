"""Model plugins: likelihoods composed with the ball projections.

Five models exercise the prior family: sparse linear regression, 2D
piecewise-constant smoothing on a pixel grid, a finite mixture with
simplex-closure weights, low-rank-plus-sparse frame decomposition, and
correlated-factor structured sparsity.  Each exposes its log-likelihood
with gradients and a builder that assembles a full ``TargetPosterior``
(likelihood + base prior + radius prior) for the sampler.

Gradients are analytic wherever the projection admits a closed-form
vector-Jacobian product (vector ball, simplex closure, polytope face);
only the nuclear projection falls back to finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigError, DegenerateInputError, InputError
from .priors import Gaussian, IndependentDE
from .projection import (
    GeneralizedBall,
    admm_project,
    AdmmFactorization,
    nuclear_project,
    project_l1_ball,
)
from .sampler import TargetPosterior, gradient_through_projection

LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# data containers


@dataclass
class RegressionData:
    """Design matrix, response, and the Inverse-Gamma prior on the noise
    variance (shape, rate)."""

    X: np.ndarray
    y: np.ndarray
    sigma2_prior: tuple = (1.0, 1.0)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.size:
            raise InputError("X must be (n, p) with y of length n")
        if not np.all(np.isfinite(self.X)):
            raise InputError("design matrix contains non-finite entries")


@dataclass
class GridData:
    """Observed pixel grid for the piecewise-constant smoothing model."""

    pixels: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise InputError("pixels must be a 2-D array")

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class MixtureData:
    """Univariate observations plus priors for the component parameters.

    mu_prior is (mean, variance) of the Gaussian prior on each component
    location; sigma2_prior is (shape, rate) of the Inverse-Gamma prior on
    each component variance.
    """

    y: np.ndarray
    K1: int
    mu_prior: tuple = (0.0, 25.0)
    sigma2_prior: tuple = (1.0, 1.0)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.K1 < 2:
            raise InputError("component upper bound K1 must be at least 2")


@dataclass
class LowRankSparseData:
    """Stack of frames, flattened to a (T, m*n) matrix."""

    frames: np.ndarray
    frame_shape: tuple
    sigma2_e: float = 1.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim == 3:
            self.frame_shape = self.frames.shape[1:]
            self.frames = self.frames.reshape(self.frames.shape[0], -1)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise InputError("frames must be (T, m*n) with T >= 1")


@dataclass
class StructuredSparsityData:
    """Symmetric observed matrix A and the structural matrix S.

    The base covariance for each factor is J - S + kappa*I with J the
    all-ones matrix; kappa keeps it positive definite when J - S is
    singular.
    """

    A: np.ndarray
    S: np.ndarray
    sigma2: float = 1.0
    kappa: float = 1e-3

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        p = self.A.shape[0]
        if self.A.shape != (p, p) or self.S.shape != (p, p):
            raise InputError("A and S must be square with matching size")

    def base_covariance(self):
        p = self.S.shape[0]
        return np.ones((p, p)) - self.S + self.kappa * np.eye(p)


# ---------------------------------------------------------------------------
# sparse linear regression


def regression_log_lik_grad(theta, sigma2, data: RegressionData):
    """Gaussian regression log-likelihood with gradients.

    Returns (log-lik, d/dtheta, d/dlog sigma2).
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size != data.X.shape[1]:
        raise InputError("theta length does not match the design matrix")
    resid = data.y - data.X @ theta
    n = data.y.size
    rss = float(np.dot(resid, resid))
    ll = -0.5 * n * (LOG_2PI + np.log(sigma2)) - rss / (2.0 * sigma2)
    grad_theta = data.X.T @ resid / sigma2
    grad_log_s2 = -0.5 * n + rss / (2.0 * sigma2)
    return ll, grad_theta, grad_log_s2


def _vector_ball_chain(res, g_theta):
    """Chain a theta-gradient back through the vector-ball projection.

    Returns (grad wrt beta, grad wrt r).  In the interior the projection
    is the identity and the radius has no effect.
    """
    if not res.boundary:
        return g_theta.copy(), 0.0
    if res.cardinality == 0:
        # radius so small that even the surviving coordinate rounded to
        # zero: the map is locally constant
        return np.zeros_like(g_theta), 0.0
    active = res.active_set
    s = res.signs[active]
    coupling = float(np.dot(g_theta[active], s)) / res.cardinality
    g_beta = np.zeros_like(g_theta)
    g_beta[active] = g_theta[active] - s * coupling
    return g_beta, coupling


def _inverse_gamma_logpdf_logscale(x, shape, rate):
    """log p(log s2) for s2 ~ InvGamma(shape, rate), Jacobian included."""
    return -shape * x - rate * np.exp(-x)


def _inverse_gamma_grad_logscale(x, shape, rate):
    return -shape + rate * np.exp(-x)


def build_regression_target(
    data: RegressionData,
    lam,
    radius_prior,
    sigma2=None,
) -> TargetPosterior:
    """Posterior over q = (beta[p], log r[, log sigma2]).

    beta carries the double-exponential base prior with scale ``lam``;
    the radius follows ``radius_prior`` sampled on the log scale.  When
    ``sigma2`` is None the noise variance is sampled jointly (log scale,
    Inverse-Gamma prior from the data container); otherwise it is fixed.
    """
    p = data.X.shape[1]
    sample_s2 = sigma2 is None
    dim = p + 1 + (1 if sample_s2 else 0)
    base = IndependentDE(lam, p)
    a_s2, b_s2 = data.sigma2_prior

    def value_and_grad(q):
        beta = q[:p]
        r = np.exp(q[p])
        s2 = np.exp(q[p + 1]) if sample_s2 else sigma2
        # overflow/underflow of the log-scale parameters marks the state
        # as unreachable instead of crashing the projection
        if not np.all(np.isfinite(q)) or not 0.0 < r < np.inf or not 0.0 < s2 < np.inf:
            return -np.inf, np.zeros(dim)
        res = project_l1_ball(beta, r)
        ll, g_theta, g_log_s2 = regression_log_lik_grad(res.theta, s2, data)
        g_beta, g_r = _vector_ball_chain(res, g_theta)

        logp = ll + base.log_density(beta) + radius_prior.log_density(r) + q[p]
        grad = np.empty(dim)
        grad[:p] = g_beta + base.grad_log_density(beta)
        grad[p] = r * (g_r + radius_prior.grad_log_density(r)) + 1.0
        if sample_s2:
            logp += _inverse_gamma_logpdf_logscale(q[p + 1], a_s2, b_s2)
            grad[p + 1] = g_log_s2 + _inverse_gamma_grad_logscale(q[p + 1], a_s2, b_s2)
        return logp, grad

    def to_record(q):
        r = float(np.exp(q[p]))
        res = project_l1_ball(q[:p], r)
        extras = {"cardinality": res.cardinality}
        if sample_s2:
            extras["sigma2"] = float(np.exp(q[p + 1]))
        return {"theta": res.theta, "r": r, "extras": extras}

    target = TargetPosterior(
        dim=dim,
        log_density=lambda q: value_and_grad(q)[0],
        gradient=lambda q: value_and_grad(q)[1],
        value_and_grad=value_and_grad,
        to_record=to_record,
    )
    # soft-threshold (lasso) start: lands the chain near a plausible
    # sparse mode instead of the dense ridge surface
    b0 = _lasso_init(data.X, data.y)
    init = np.concatenate(
        [b0, [np.log(max(np.sum(np.abs(b0)), 1e-2))]]
        + ([[0.0]] if sample_s2 else [])
    )
    target.default_init = init
    return target


def _lasso_init(X, y, n_iter=500):
    """ISTA solve of the lasso at the universal penalty level, debiased
    by a least-squares refit on the selected support."""
    n, p = X.shape
    tau = np.sqrt(2.0 * np.log(max(p, 2))) * np.sqrt(n)
    L = np.linalg.norm(X, 2) ** 2
    b = np.zeros(p)
    for _ in range(n_iter):
        g = b + X.T @ (y - X @ b) / L
        b = np.sign(g) * np.maximum(np.abs(g) - tau / L, 0.0)
    support = np.flatnonzero(b)
    if support.size == 0:
        return b
    refit = np.zeros(p)
    refit[support] = np.linalg.lstsq(X[:, support], y, rcond=None)[0]
    return refit


# ---------------------------------------------------------------------------
# 2D piecewise-constant smoothing (generalized ball on grid contrasts)


def grid_contrast_matrix(p1, p2):
    """First-difference operator over vertical and horizontal neighbor
    pairs, stacked on identity rows: d = (p1-1)p2 + p1(p2-1) + p1*p2."""
    p = p1 * p2
    idx = np.arange(p).reshape(p1, p2)
    rows = []
    for i in range(p1 - 1):
        for j in range(p2):
            row = np.zeros(p)
            row[idx[i, j]] = 1.0
            row[idx[i + 1, j]] = -1.0
            rows.append(row)
    for i in range(p1):
        for j in range(p2 - 1):
            row = np.zeros(p)
            row[idx[i, j]] = 1.0
            row[idx[i, j + 1]] = -1.0
            rows.append(row)
    return np.vstack([np.array(rows), np.eye(p)])


def _polytope_face_vjp(theta, D, r, g, ztol=1e-6):
    """VJP of the projection onto {z : ||D z||_1 <= r} at its output.

    The projection is piecewise affine; on the active face
    {z : D_Z z = 0, sigma' D z = r} the Jacobian is the orthogonal
    projector onto the face's tangent space.
    """
    Dtheta = D @ theta
    if np.sum(np.abs(Dtheta)) < r * (1.0 - 1e-9):
        return g.copy()
    zero_rows = np.abs(Dtheta) < ztol
    sigma = np.sign(Dtheta)
    facet = D[~zero_rows].T @ sigma[~zero_rows]
    A = np.vstack([D[zero_rows], facet[None, :]])
    AAt = A @ A.T
    out = g - A.T @ np.linalg.lstsq(AAt, A @ g, rcond=None)[0]
    return out


def fused_target(beta_flat, r, data: GridData, admm_tol=1e-10):
    """Log-likelihood contribution of the smoothing model at beta.

    Projects beta onto the generalized ball of the grid-contrast
    operator, scores the pixels under the Gaussian noise model, and
    returns (value, gradient wrt beta) with the gradient chained through
    the active polytope face.
    """
    p1, p2 = data.shape
    D = grid_contrast_matrix(p1, p2)
    ball = GeneralizedBall(kind="linear_map", radius=r, D=D)
    res = admm_project(np.asarray(beta_flat, dtype=float), ball, tol=admm_tol)
    resid = data.pixels.ravel() - res.theta
    ll = -0.5 * resid.size * (LOG_2PI + np.log(data.sigma2)) - np.dot(resid, resid) / (
        2.0 * data.sigma2
    )
    g_theta = resid / data.sigma2
    g_beta = _polytope_face_vjp(res.theta, D, r, g_theta)
    return float(ll), g_beta


class _FusedPosterior:
    """Caches the contrast matrix and ADMM factorization across calls."""

    def __init__(self, data: GridData, r, lam, admm_tol=1e-8):
        self.data = data
        self.r = float(r)
        self.base = IndependentDE(lam, data.pixels.size)
        p1, p2 = data.shape
        self.D = grid_contrast_matrix(p1, p2)
        self.ball = GeneralizedBall(kind="linear_map", radius=self.r, D=self.D)
        self.fact = AdmmFactorization(self.D, 1.0)
        self.admm_tol = admm_tol
        self._warm = None

    def project(self, beta):
        res = admm_project(
            beta,
            self.ball,
            tol=self.admm_tol,
            warm_start=self._warm,
            factorization=self.fact,
        )
        self._warm = res.admm_state
        return res

    def value_and_grad(self, q):
        res = self.project(q)
        resid = self.data.pixels.ravel() - res.theta
        n = resid.size
        ll = -0.5 * n * (LOG_2PI + np.log(self.data.sigma2)) - np.dot(resid, resid) / (
            2.0 * self.data.sigma2
        )
        g_theta = resid / self.data.sigma2
        g_beta = _polytope_face_vjp(res.theta, self.D, self.r, g_theta)
        return ll + self.base.log_density(q), g_beta + self.base.grad_log_density(q)

    def to_record(self, q):
        res = self.project(q)
        # the split variable carries the contrast values with literal
        # zeros (it comes out of an exact vector-ball projection)
        contrasts = res.h_value
        return {
            "theta": res.theta,
            "r": self.r,
            "extras": {"n_zero_contrasts": int(np.sum(contrasts == 0.0))},
        }


def build_fused_target(data: GridData, r, lam) -> TargetPosterior:
    """Posterior over the latent pixel field (fixed radius)."""
    post = _FusedPosterior(data, r, lam)
    target = TargetPosterior(
        dim=data.pixels.size,
        log_density=lambda q: post.value_and_grad(q)[0],
        gradient=lambda q: post.value_and_grad(q)[1],
        value_and_grad=post.value_and_grad,
        to_record=post.to_record,
    )
    target.default_init = data.pixels.ravel().copy()
    return target


# ---------------------------------------------------------------------------
# mixture of finite mixtures


def mixture_weights_from_ball(beta, r):
    """Map unconstrained beta to the closed probability simplex.

    w = P_{B_r}(beta), theta_k = |w_k| / sum |w|.  Zero weights stay
    exactly zero, so the map reaches every face of the simplex.
    """
    beta = np.asarray(beta, dtype=float)
    res = project_l1_ball(beta, r)
    total = np.sum(np.abs(res.theta))
    if total == 0.0:
        raise DegenerateInputError("all-zero weight vector: beta = 0 inside the ball")
    return np.abs(res.theta) / total


def mixture_log_lik(y, theta, mus, sigma2s):
    """Log-sum-exp-stable mixture log-likelihood.

    Components with theta_k = 0 are dropped before taking logs so they
    contribute nothing (and cannot produce -inf * 0 artifacts).
    """
    theta = np.asarray(theta, dtype=float)
    active = np.flatnonzero(theta > 0.0)
    if active.size == 0:
        raise DegenerateInputError("no active mixture component")
    y = np.asarray(y, dtype=float)
    mus = np.asarray(mus, dtype=float)[active]
    s2 = np.asarray(sigma2s, dtype=float)[active]
    if np.any(s2 <= 0):
        raise InputError("component variances must be positive")
    log_terms = (
        np.log(theta[active])[None, :]
        - 0.5 * (LOG_2PI + np.log(s2))[None, :]
        - (y[:, None] - mus[None, :]) ** 2 / (2.0 * s2[None, :])
    )
    return float(np.sum(logsumexp(log_terms, axis=1)))


def _mixture_log_lik_grads(y, theta, mus, sigma2s):
    """Likelihood value plus gradients wrt (theta, mu, log sigma2).

    Gradients for inactive components are zero; the theta gradient is
    the usual responsibility-weighted sum.
    """
    theta = np.asarray(theta, dtype=float)
    K = theta.size
    active = np.flatnonzero(theta > 0.0)
    if active.size == 0:
        raise DegenerateInputError("no active mixture component")
    y = np.asarray(y, dtype=float)
    mu_a = np.asarray(mus, dtype=float)[active]
    s2_a = np.asarray(sigma2s, dtype=float)[active]
    z = y[:, None] - mu_a[None, :]
    log_phi = -0.5 * (LOG_2PI + np.log(s2_a))[None, :] - z**2 / (2.0 * s2_a[None, :])
    log_terms = np.log(theta[active])[None, :] + log_phi
    # manual log-sum-exp: resp falls out of the same pass, and the theta
    # gradient is resp / theta (responsibilities divided by the weight)
    m = log_terms.max(axis=1)
    e = np.exp(log_terms - m[:, None])
    norm = e.sum(axis=1)
    log_norm = m + np.log(norm)
    ll = float(np.sum(log_norm))
    resp = e / norm[:, None]
    g_theta = np.zeros(K)
    g_theta[active] = np.sum(resp, axis=0) / theta[active]
    g_mu = np.zeros(K)
    g_mu[active] = np.sum(resp * z / s2_a[None, :], axis=0)
    g_log_s2 = np.zeros(K)
    g_log_s2[active] = np.sum(resp * (z**2 / (2.0 * s2_a[None, :]) - 0.5), axis=0)
    return ll, g_theta, g_mu, g_log_s2


def _simplex_chain(res, total, g_theta):
    """Chain a simplex gradient back through theta = |w| / sum|w| and the
    vector-ball projection producing w."""
    w = res.theta
    theta = np.abs(w) / total
    inner = float(np.dot(g_theta, theta))
    g_w = np.sign(w) * (g_theta - inner) / total
    return _vector_ball_chain(res, g_w)


def build_mixture_target(data: MixtureData, lam, r=1.0) -> TargetPosterior:
    """Posterior over q = (beta[K1], mu[K1], log sigma2[K1]).

    The component count K = |{theta_k > 0}| is induced by the projection;
    the radius is fixed (its scale only sets how readily weights hit
    zero relative to the base scale lam).
    """
    K = data.K1
    base = IndependentDE(lam, K)
    m0, v0 = data.mu_prior
    a_s2, b_s2 = data.sigma2_prior

    def value_and_grad(q):
        beta, mus, log_s2 = q[:K], q[K : 2 * K], q[2 * K :]
        s2 = np.exp(log_s2)
        if not np.all(np.isfinite(q)) or not np.all((s2 > 0.0) & np.isfinite(s2)):
            return -np.inf, np.full(3 * K, np.nan)
        res = project_l1_ball(beta, r)
        total = np.sum(np.abs(res.theta))
        if total == 0.0:
            return -np.inf, np.full(3 * K, np.nan)
        theta = np.abs(res.theta) / total
        ll, g_theta, g_mu, g_log_s2 = _mixture_log_lik_grads(data.y, theta, mus, s2)
        g_beta, _ = _simplex_chain(res, total, g_theta)

        logp = (
            ll
            + base.log_density(beta)
            - 0.5 * np.sum((mus - m0) ** 2) / v0
            + np.sum(_inverse_gamma_logpdf_logscale(log_s2, a_s2, b_s2))
        )
        grad = np.empty(3 * K)
        grad[:K] = g_beta + base.grad_log_density(beta)
        grad[K : 2 * K] = g_mu - (mus - m0) / v0
        grad[2 * K :] = g_log_s2 + _inverse_gamma_grad_logscale(log_s2, a_s2, b_s2)
        return logp, grad

    def to_record(q):
        theta = mixture_weights_from_ball(q[:K], r)
        return {
            "theta": theta,
            "r": r,
            "extras": {
                "K": int(np.sum(theta > 0.0)),
                "mus": q[K : 2 * K].copy(),
                "sigma2s": np.exp(q[2 * K :]),
            },
        }

    target = TargetPosterior(
        dim=3 * K,
        log_density=lambda q: value_and_grad(q)[0],
        gradient=lambda q: value_and_grad(q)[1],
        value_and_grad=value_and_grad,
        to_record=to_record,
    )
    # spread starts: all weights live, locations on observed quantiles
    qs = np.quantile(data.y, np.linspace(0.05, 0.95, K))
    target.default_init = np.concatenate(
        [np.full(K, r / K), qs, np.full(K, np.log(np.var(data.y) / K + 0.1))]
    )
    return target


# ---------------------------------------------------------------------------
# low-rank plus sparse decomposition


def lowrank_sparse_target(L_beta, S_betas, radii, data: LowRankSparseData):
    """Log-likelihood contribution of the frame decomposition.

    L = nuclear projection of the (T, m*n) matrix L_beta at radius
    radii[0]; each sparse frame S_t is the vector projection of the
    matching row of S_betas at radius radii[1].  Returns
    (value, grad wrt L_beta, grad wrt S_betas); the L gradient uses
    central differences around the spectral projection.
    """
    L_beta = np.asarray(L_beta, dtype=float)
    S_betas = np.asarray(S_betas, dtype=float)
    T, mn = data.frames.shape
    if L_beta.shape != (T, mn) or S_betas.shape != (T, mn):
        raise InputError("parameter stacks must match the frame stack shape")
    r_L, r_S = radii
    L, _ = nuclear_project(L_beta, r_L)
    S = np.empty_like(S_betas)
    proj = [project_l1_ball(S_betas[t], r_S) for t in range(T)]
    for t in range(T):
        S[t] = proj[t].theta
    resid = data.frames - L - S
    ll = -0.5 * resid.size * (LOG_2PI + np.log(data.sigma2_e)) - np.sum(resid**2) / (
        2.0 * data.sigma2_e
    )
    g_fit = resid / data.sigma2_e
    ball_L = GeneralizedBall(kind="nuclear", radius=r_L, shape=(T, mn))
    g_L, _ = gradient_through_projection(L_beta.ravel(), ball_L, g_fit.ravel())
    g_S = np.empty_like(S_betas)
    for t in range(T):
        g_S[t] = _vector_ball_chain(proj[t], g_fit[t])[0]
    return float(ll), g_L.reshape(T, mn), g_S


def build_lowrank_target(
    data: LowRankSparseData, radii, lam_S, tau_L=10.0
) -> TargetPosterior:
    """Posterior over q = (vec L_beta, vec S_betas).

    L_beta entries get a wide Gaussian base prior (scale tau_L), the
    sparse frames a double-exponential base with scale lam_S.
    """
    T, mn = data.frames.shape
    n_par = T * mn

    def value_and_grad(q):
        L_beta = q[:n_par].reshape(T, mn)
        S_betas = q[n_par:].reshape(T, mn)
        ll, g_L, g_S = lowrank_sparse_target(L_beta, S_betas, radii, data)
        logp = ll - 0.5 * np.sum(L_beta**2) / tau_L**2 - np.sum(np.abs(S_betas)) / lam_S
        grad = np.concatenate(
            [
                (g_L - L_beta / tau_L**2).ravel(),
                (g_S - np.sign(S_betas) / lam_S).ravel(),
            ]
        )
        return float(logp), grad

    def to_record(q):
        L_beta = q[:n_par].reshape(T, mn)
        S_betas = q[n_par:].reshape(T, mn)
        L, sv = nuclear_project(L_beta, radii[0])
        S = np.vstack([project_l1_ball(S_betas[t], radii[1]).theta for t in range(T)])
        return {
            "theta": np.concatenate([L.ravel(), S.ravel()]),
            "r": radii[0],
            "extras": {
                "rank": int(np.sum(sv > 0.0)),
                "nuclear_norm": float(np.sum(sv)),
                "spike_support": np.flatnonzero(np.any(S != 0.0, axis=0)),
            },
        }

    target = TargetPosterior(
        dim=2 * n_par,
        log_density=lambda q: value_and_grad(q)[0],
        gradient=lambda q: value_and_grad(q)[1],
        value_and_grad=value_and_grad,
        to_record=to_record,
    )
    target.default_init = np.concatenate([data.frames.ravel(), np.zeros(n_par)])
    return target


# ---------------------------------------------------------------------------
# correlated-factor structured sparsity


def structured_sparsity_target(betas, gammas, S, radii, data: StructuredSparsityData):
    """Log-likelihood contribution of the factor model A = sum_k
    lambda_k theta_k theta_k' + E.

    theta_k = vector projection of factor k at radii[0]; the factor
    loadings lambda = vector projection of gammas at radii[1].  Returns
    (value, grad wrt betas, grad wrt gammas); both gradients are
    analytic through the vector-ball VJPs.
    """
    betas = np.asarray(betas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    d, p = betas.shape
    S = np.asarray(S, dtype=float)
    if gammas.size != d or data.A.shape[0] != p or S.shape != (p, p):
        raise InputError("factor stack dimensions are inconsistent")
    r_theta, r_lam = radii
    proj_b = [project_l1_ball(betas[k], r_theta) for k in range(d)]
    thetas = np.vstack([pr.theta for pr in proj_b])
    proj_g = project_l1_ball(gammas, r_lam)
    lams = proj_g.theta
    M = (thetas.T * lams) @ thetas
    resid = data.A - M
    ll = -np.sum(resid**2) / (2.0 * data.sigma2) - 0.5 * data.A.size * (
        LOG_2PI + np.log(data.sigma2)
    )
    G = resid / data.sigma2  # symmetric
    g_betas = np.empty_like(betas)
    g_theta_rows = 2.0 * lams[:, None] * (thetas @ G)
    for k in range(d):
        g_betas[k] = _vector_ball_chain(proj_b[k], g_theta_rows[k])[0]
    g_lam = np.einsum("ki,ij,kj->k", thetas, G, thetas)
    g_gammas = _vector_ball_chain(proj_g, g_lam)[0]
    return float(ll), g_betas, g_gammas


def build_structured_target(
    data: StructuredSparsityData, radii, d
) -> TargetPosterior:
    """Posterior over q = (vec betas[d*p], log gammas[d]).

    Factors get the correlated Gaussian base N(0, J - S + kappa I); the
    loadings gamma_k follow a unit exponential prior and are sampled on
    the log scale to stay positive.
    """
    p = data.A.shape[0]
    try:
        base = Gaussian(np.zeros(p), data.base_covariance())
    except Exception as err:  # noqa: BLE001 - any factorization failure
        raise ConfigError(
            "base covariance J - S + kappa*I is not positive definite"
        ) from err

    def value_and_grad(q):
        betas = q[: d * p].reshape(d, p)
        log_g = q[d * p :]
        gammas = np.exp(log_g)
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(gammas) & (gammas > 0)):
            return -np.inf, np.full(q.size, np.nan)
        ll, g_betas, g_gammas = structured_sparsity_target(
            betas, gammas, data.S, radii, data
        )
        logp = ll - np.sum(gammas) + np.sum(log_g)  # Exp(1) prior + Jacobian
        grad = np.empty(q.size)
        for k in range(d):
            logp += base.log_density(betas[k])
            g_betas[k] += base.grad_log_density(betas[k])
        grad[: d * p] = g_betas.ravel()
        grad[d * p :] = gammas * (g_gammas - 1.0) + 1.0
        return float(logp), grad

    def to_record(q):
        betas = q[: d * p].reshape(d, p)
        gammas = np.exp(q[d * p :])
        thetas = np.vstack([project_l1_ball(betas[k], radii[0]).theta for k in range(d)])
        lams = project_l1_ball(gammas, radii[1]).theta
        return {
            "theta": thetas.ravel(),
            "r": radii[0],
            "extras": {"lambdas": lams, "n_active_factors": int(np.sum(lams != 0.0))},
        }

    target = TargetPosterior(
        dim=d * p + d,
        log_density=lambda q: value_and_grad(q)[0],
        gradient=lambda q: value_and_grad(q)[1],
        value_and_grad=value_and_grad,
        to_record=to_record,
    )
    rng = np.random.default_rng(0)
    target.default_init = np.concatenate(
        [0.1 * rng.standard_normal(d * p), np.zeros(d)]
    )
    return target


# ---------------------------------------------------------------------------
# registry for CLI dispatch

MODEL_REGISTRY = {
    "regression": {
        "builder": build_regression_target,
        "data_schema": "X.csv (n x p), y.csv (n,)",
    },
    "fused": {
        "builder": build_fused_target,
        "data_schema": "pixels.csv (p1 x p2)",
    },
    "mixture": {
        "builder": build_mixture_target,
        "data_schema": "y.csv (n,)",
    },
    "lowrank": {
        "builder": build_lowrank_target,
        "data_schema": "frames.csv (T x m*n)",
    },
    "structured": {
        "builder": build_structured_target,
        "data_schema": "A.csv (p x p), S.csv (p x p)",
    },
}
