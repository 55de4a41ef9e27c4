"""Euclidean projections onto l1-balls and the augmented change of variables.

Three ball kinds are supported: the vector-norm ball {x : ||x||_1 <= r}
(exact, sort-based), the linear-map ball {z : ||Dz||_1 <= r} (iterative,
ADMM), and the nuclear-norm ball for matrices (closed form via SVD).
All functions are pure; nothing here keeps mutable state between calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    InputError,
)

# ||beta||_1 <= r * (1 + BOUNDARY_RTOL) is treated as interior, so that
# points numerically on the sphere do not get a spurious boundary flag.
BOUNDARY_RTOL = 1e-12


@dataclass
class ProjectionResult:
    """Output of a ball projection.

    Attributes
    ----------
    theta : ndarray
        The projected point.  Entries outside ``active_set`` are literal
        zeros (written by ``max(., 0)``, not thresholded afterwards).
    active_set : ndarray of int
        Indices i with theta_i != 0.
    mu : float
        Total slack removed on the boundary (0 in the interior case).
    signs : ndarray
        Elementwise sign of the input, with sign(0) := +1.
    boundary : bool
        True when the input was outside the ball and landed on it.
    h_value : ndarray or None
        For generalized balls, the exactly-sparse value of h(theta)
        (e.g. D @ theta); None for the vector ball.
    n_iter : int or None
        Iteration count for iterative projections.
    primal_residual, dual_residual : float or None
        Final ADMM residual norms.
    """

    theta: np.ndarray
    active_set: np.ndarray
    mu: float
    signs: np.ndarray
    boundary: bool
    h_value: np.ndarray | None = None
    n_iter: int | None = None
    primal_residual: float | None = None
    dual_residual: float | None = None
    admm_state: tuple | None = field(default=None, repr=False)

    @property
    def cardinality(self) -> int:
        return int(len(self.active_set))


@dataclass
class AugmentedState:
    """Latent coordinates (t, s, mu) of the invertible augmented transform."""

    t: np.ndarray
    s: np.ndarray
    mu: float


@dataclass
class GeneralizedBall:
    """Which l1-ball to project onto.

    kind is one of "vector", "linear_map" (requires ``D``) or "nuclear"
    (requires ``shape`` = (rows, cols) of the matrix parameter).
    """

    kind: str
    radius: float
    D: np.ndarray | None = None
    shape: tuple | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("ball radius must be positive")
        if self.kind == "linear_map":
            if self.D is None:
                raise DomainError("linear_map ball requires the matrix D")
            self.D = np.asarray(self.D, dtype=float)
            if self.D.ndim != 2 or not np.all(np.isfinite(self.D)):
                raise InputError("D must be a finite 2-d matrix")
        elif self.kind == "nuclear":
            if self.shape is None or len(self.shape) != 2 or min(self.shape) < 1:
                raise DomainError("nuclear ball requires a positive (rows, cols) shape")
        elif self.kind != "vector":
            raise DomainError(f"unknown ball kind {self.kind!r}")


def _check_vector_input(beta, r):
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.ndim != 1 or beta.size < 1:
        raise InputError("beta must be a 1-d vector")
    if not np.all(np.isfinite(beta)):
        raise InputError("beta contains non-finite entries")
    if not (np.isscalar(r) or np.ndim(r) == 0) or not np.isfinite(r) or r <= 0:
        raise DomainError("radius r must be a positive finite scalar")
    return beta, float(r)


def _signs(beta):
    return np.where(beta >= 0, 1.0, -1.0)


def project_l1_ball(beta, r) -> ProjectionResult:
    """Euclidean projection of ``beta`` onto {x : ||x||_1 <= r}.

    Uses the sorted cumulative-sum scan: with |beta| sorted in decreasing
    order, the active count is the largest j such that
    |beta|_(j) > (sum_{i<=j} |beta|_(i) - r)_+ / j, and each surviving
    coordinate is soft-thresholded by mu/c.  Ties in |beta| are broken by
    index ascending; the projected value is unaffected by the tie-break,
    only the bookkeeping order differs.
    """
    beta, r = _check_vector_input(beta, r)
    signs = _signs(beta)
    a = np.abs(beta)
    if a.sum() <= r * (1 + BOUNDARY_RTOL):
        theta = beta.copy()
        return ProjectionResult(
            theta=theta,
            active_set=np.flatnonzero(theta),
            mu=0.0,
            signs=signs,
            boundary=False,
        )
    order = np.argsort(-a, kind="stable")
    a_sorted = a[order]
    csum = np.cumsum(a_sorted)
    j = np.arange(1, a.size + 1)
    mu_j = np.maximum(csum - r, 0.0)
    hits = np.flatnonzero(a_sorted > mu_j / j)
    # c >= 1 always holds in exact arithmetic (the j=1 condition is
    # |beta|_(1) > |beta|_(1) - r); a subnormal r can round it away
    c = int(hits.max()) + 1 if hits.size else 1
    mu = csum[c - 1] - r
    theta = signs * np.maximum(a - mu / c, 0.0)
    return ProjectionResult(
        theta=theta,
        active_set=np.flatnonzero(theta),
        mu=float(mu),
        signs=signs,
        boundary=True,
    )


def project_l1_ball_batch(betas, r):
    """Vectorized vector-ball projection of many rows at once.

    Parameters
    ----------
    betas : ndarray (N, p)
    r : float or ndarray (N,)

    Returns
    -------
    theta : ndarray (N, p)
        Row-wise projections (rows already inside the ball are copied).
    """
    B = np.asarray(betas, dtype=float)
    if B.ndim != 2:
        raise InputError("betas must be an (N, p) array")
    r = np.broadcast_to(np.asarray(r, dtype=float), (B.shape[0],))
    if np.any(r <= 0):
        raise DomainError("all radii must be positive")
    A = np.abs(B)
    l1 = A.sum(axis=1)
    A_sorted = -np.sort(-A, axis=1)
    csum = np.cumsum(A_sorted, axis=1)
    j = np.arange(1, B.shape[1] + 1)
    mu_j = np.maximum(csum - r[:, None], 0.0)
    cond = A_sorted > mu_j / j
    c = np.where(cond.any(axis=1), B.shape[1] - np.argmax(cond[:, ::-1], axis=1), 1)
    mu = np.take_along_axis(csum, c[:, None] - 1, axis=1)[:, 0] - r
    outside = l1 > r * (1 + BOUNDARY_RTOL)
    thr = np.where(outside, mu / c, 0.0)
    return np.sign(B) * np.maximum(A - thr[:, None], 0.0)


def forward_transform(beta, r) -> AugmentedState:
    """Map beta to the latent (t, s, mu) of the augmented transform.

    In the interior (||beta||_1 < r): t = |beta|, mu = 0.  On the
    boundary regime: t_i = |beta_i| - mu/c with (mu, c) from the
    projection, so theta_i = s_i (t_i)_+ reconstructs the projection.
    """
    res = project_l1_ball(beta, r)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    a = np.abs(beta)
    if not res.boundary:
        return AugmentedState(t=a, s=res.signs, mu=0.0)
    c = res.cardinality
    return AugmentedState(t=a - res.mu / c, s=res.signs, mu=res.mu)


def inverse_transform(state: AugmentedState, r, tol=1e-8):
    """Invert the augmented transform: beta_i = s_i (t_i + mu / |C|).

    Validates the domain constraints of the transform (boundary regime:
    sum of positive t equals r, the non-positive t lie in [-mu/|C|, 0];
    interior regime: mu = 0 and sum t < r) and raises ``DomainError``
    otherwise.  An empty active set returns the zero vector.
    """
    t = np.atleast_1d(np.asarray(state.t, dtype=float))
    s = np.atleast_1d(np.asarray(state.s, dtype=float))
    if t.shape != s.shape:
        raise InputError("t and s must have the same shape")
    if not np.all(np.isin(s, (-1.0, 1.0))):
        raise DomainError("signs must be +/-1")
    mu = float(state.mu)
    if mu < -tol:
        raise DomainError("mu must be non-negative")
    active = t > 0
    n_active = int(active.sum())
    if n_active == 0:
        return np.zeros_like(t)
    t_active_sum = t[active].sum()
    scale = max(1.0, r)
    if abs(t_active_sum - r) <= tol * scale:
        lo = -mu / n_active - tol * scale
        if np.any(t[~active] < lo):
            raise DomainError("inactive t below -mu/|C|")
    elif t_active_sum < r and np.all(t >= -tol * scale):
        if mu > tol * scale:
            raise DomainError("interior state must have mu = 0")
        mu = 0.0
    else:
        raise DomainError("t violates the transform domain constraints")
    return s * (t + mu / n_active)


def _jacobian_coordinates(beta, r):
    """Coordinates (theta_C minus one, t outside C, mu) used for the
    finite-difference Jacobian witness; mirrors the block structure of the
    inverse map."""
    res = project_l1_ball(beta, r)
    st = forward_transform(beta, r)
    if not res.boundary:
        return st.t
    active = res.active_set
    # drop the weakest active coordinate; it is determined by the others
    drop = active[np.argmin(np.abs(beta)[active])]
    keep = active[active != drop]
    inactive = np.setdiff1d(np.arange(beta.size), active)
    return np.concatenate([res.theta[keep], st.t[inactive], [st.mu]])


def jacobian_abs_det(beta, r, fd_step=None):
    """Finite-difference |det| of the augmented transform's Jacobian.

    A numerical witness that the transform is volume preserving: the
    value should be 1 up to O(fd_step) error at any generic point.
    Points with tied magnitudes or a coordinate at the shrinkage
    threshold (within a few fd_steps) are degenerate and rejected.
    """
    beta, r = _check_vector_input(beta, r)
    p = beta.size
    steps = (1e-6 * (1.0 + np.abs(beta))) if fd_step is None else np.full(p, float(fd_step))
    a_sorted = np.sort(np.abs(beta))
    guard = 10.0 * steps.max()
    if p > 1 and np.min(np.diff(a_sorted)) < guard:
        raise DegenerateInputError("tied |beta| magnitudes within the step size")
    st = forward_transform(beta, r)
    if st.mu > 0 and np.min(np.abs(st.t)) < guard:
        raise DegenerateInputError("a coordinate sits at the shrinkage threshold")
    base_active = project_l1_ball(beta, r).cardinality
    J = np.empty((p, p))
    for k in range(p):
        e = np.zeros(p)
        e[k] = steps[k]
        hi = _jacobian_coordinates(beta + e, r)
        lo = _jacobian_coordinates(beta - e, r)
        if hi.size != lo.size or hi.size != p:
            raise DegenerateInputError("active set changed within the step size")
        J[:, k] = (hi - lo) / (2 * steps[k])
    if project_l1_ball(beta, r).cardinality != base_active:
        raise DegenerateInputError("active set not stable at the base point")
    return float(abs(np.linalg.det(J)))


class AdmmFactorization:
    """Cached Cholesky factor of (I + (2 rho)^-1 D^T D) for the z-update."""

    def __init__(self, D, rho):
        self.D = np.asarray(D, dtype=float)
        self.rho = float(rho)
        p = self.D.shape[1]
        M = np.eye(p) + self.D.T @ self.D / (2.0 * self.rho)
        self.cho = scipy.linalg.cho_factor(M)

    def solve(self, rhs):
        return scipy.linalg.cho_solve(self.cho, rhs)


def admm_project(
    beta,
    ball: GeneralizedBall,
    rho=1.0,
    tol=1e-8,
    max_iter=20000,
    warm_start=None,
    factorization=None,
) -> ProjectionResult:
    """Projection onto {z : ||D z||_1 <= r} by ADMM splitting.

    Alternates a linear z-update (cached Cholesky of I + (2 rho)^-1 D^T D),
    an exact vector-ball projection for the split variable, and a scaled
    dual ascent.  Stops when both residual norms fall below tol * sqrt(dim)
    of their respective spaces; raises ``ConvergenceError`` (carrying the
    residuals) after ``max_iter`` sweeps.

    ``warm_start`` may carry the (s, kappa) pair of a previous call on a
    nearby input; the result's ``admm_state`` holds the final pair.
    """
    if ball.kind != "linear_map":
        raise DomainError("admm_project requires a linear_map ball")
    beta, r = _check_vector_input(beta, ball.radius)
    D = ball.D
    d, p = D.shape
    if p != beta.size:
        raise InputError("D and beta dimensions do not match")
    fact = factorization if factorization is not None else AdmmFactorization(D, rho)
    if warm_start is not None:
        s, kappa = (np.array(x, dtype=float) for x in warm_start)
    else:
        s = project_l1_ball(D @ beta, r).theta
        kappa = np.zeros(d)
    eps_primal = tol * np.sqrt(d)
    eps_dual = tol * np.sqrt(p)
    z = beta
    inner = None
    for it in range(1, max_iter + 1):
        z = fact.solve(beta + D.T @ (s - kappa) / (2.0 * rho))
        Dz = D @ z
        s_old = s
        inner = project_l1_ball(Dz + kappa, r)
        s = inner.theta
        kappa = kappa + Dz - s
        primal = np.linalg.norm(Dz - s)
        dual = np.linalg.norm(D.T @ (s - s_old)) / rho
        if primal < eps_primal and dual < eps_dual:
            return ProjectionResult(
                theta=z,
                active_set=np.flatnonzero(s),
                mu=inner.mu,
                signs=_signs(s),
                boundary=inner.boundary,
                h_value=s,
                n_iter=it,
                primal_residual=float(primal),
                dual_residual=float(dual),
                admm_state=(s.copy(), kappa.copy()),
            )
    raise ConvergenceError(
        f"ADMM did not converge in {max_iter} iterations",
        primal_residual=float(primal),
        dual_residual=float(dual),
    )


def nuclear_project(B, r, tol=BOUNDARY_RTOL):
    """Projection onto the nuclear-norm ball {Z : sum sigma_k(Z) <= r}.

    Closed form: keep the singular vectors of B and replace the singular
    values by their vector-ball projection (spectral soft-thresholding).

    Returns
    -------
    L : ndarray
        The projected matrix.
    singular_values : ndarray
        Singular values of L, descending.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or not np.all(np.isfinite(B)):
        raise InputError("B must be a finite 2-d matrix")
    if r <= 0:
        raise DomainError("radius r must be positive")
    try:
        U, sv, Vt = np.linalg.svd(B, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed: {exc}") from exc
    if sv.sum() <= r * (1 + tol):
        return B.copy(), sv
    sv_new = project_l1_ball(sv, r).theta
    return (U * sv_new) @ Vt, sv_new


def project_ball(beta, ball: GeneralizedBall, **kwargs):
    """Dispatch a projection by ball kind; beta is flat for all kinds."""
    if ball.kind == "vector":
        return project_l1_ball(beta, ball.radius)
    if ball.kind == "linear_map":
        return admm_project(beta, ball, **kwargs)
    L, sv = nuclear_project(np.reshape(beta, ball.shape), ball.radius)
    theta = L.ravel()
    return ProjectionResult(
        theta=theta,
        active_set=np.flatnonzero(theta),
        mu=0.0,
        signs=_signs(theta),
        boundary=bool(sv.sum() >= ball.radius * (1 - 1e-9)),
        h_value=sv,
    )
