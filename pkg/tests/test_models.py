"""Model-plugin tests: closed-form likelihood values, analytic-vs-FD
gradient checks, simplex-closure behavior, and degenerate-input errors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from l1ball.exceptions import ConfigError, DegenerateInputError, InputError
from l1ball.models import (
    GridData,
    LowRankSparseData,
    MixtureData,
    RegressionData,
    StructuredSparsityData,
    build_lowrank_target,
    build_mixture_target,
    build_regression_target,
    build_structured_target,
    fused_target,
    grid_contrast_matrix,
    lowrank_sparse_target,
    mixture_log_lik,
    mixture_weights_from_ball,
    regression_log_lik_grad,
    structured_sparsity_target,
)
from l1ball.priors import HalfCauchyRadius
from l1ball.projection import project_l1_ball, project_l1_ball_batch


def fd_grad(f, q, h=1e-6):
    g = np.empty(q.size)
    for i in range(q.size):
        e = np.zeros(q.size)
        e[i] = h
        g[i] = (f(q + e) - f(q - e)) / (2 * h)
    return g


class TestRegressionLikelihood:
    def test_zero_theta_zero_y(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((7, 3))
        data = RegressionData(X=X, y=np.zeros(7))
        for s2 in (1.0, 2.5):
            ll, _, _ = regression_log_lik_grad(np.zeros(3), s2, data)
            assert ll == pytest.approx(-3.5 * np.log(2 * np.pi * s2))

    def test_single_point_zero_residual(self):
        data = RegressionData(X=np.array([[1.0]]), y=np.array([2.0]))
        ll, _, _ = regression_log_lik_grad(np.array([2.0]), 1.0, data)
        assert ll == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            X = rng.standard_normal((12, 4))
            y = rng.standard_normal(12)
            data = RegressionData(X=X, y=y)
            theta = rng.standard_normal(4)
            log_s2 = rng.normal(0, 0.5)
            _, g_theta, g_ls2 = regression_log_lik_grad(theta, np.exp(log_s2), data)
            fd_t = fd_grad(
                lambda t: regression_log_lik_grad(t, np.exp(log_s2), data)[0], theta
            )
            np.testing.assert_allclose(g_theta, fd_t, rtol=1e-6, atol=1e-6)
            h = 1e-6
            fd_s = (
                regression_log_lik_grad(theta, np.exp(log_s2 + h), data)[0]
                - regression_log_lik_grad(theta, np.exp(log_s2 - h), data)[0]
            ) / (2 * h)
            assert g_ls2 == pytest.approx(fd_s, rel=1e-6, abs=1e-6)

    def test_dimension_mismatch(self):
        data = RegressionData(X=np.ones((3, 2)), y=np.zeros(3))
        with pytest.raises(InputError):
            regression_log_lik_grad(np.zeros(5), 1.0, data)


class TestRegressionTarget:
    def test_posterior_gradient_matches_fd(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((15, 5))
        y = X @ np.array([2.0, 0.0, -1.0, 0.0, 0.0]) + 0.1 * rng.standard_normal(15)
        target = build_regression_target(
            RegressionData(X=X, y=y), lam=1.0, radius_prior=HalfCauchyRadius(1.0)
        )
        checked = 0
        for seed in range(40):
            q = np.random.default_rng(seed).normal(0, 1.0, target.dim)
            r = np.exp(q[5])
            res = project_l1_ball(q[:5], r)
            if res.boundary:
                t = np.abs(q[:5]) - res.mu / res.cardinality
                if np.min(np.abs(t)) < 1e-4:
                    continue  # too close to the projection kink for FD
            logp, grad = target.value_and_grad(q)
            assert np.isfinite(logp)
            fd = fd_grad(lambda z: target.value_and_grad(z)[0], q)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)
            checked += 1
            if checked >= 8:
                break
        assert checked >= 8

    def test_default_init_is_finite(self):
        rng = np.random.default_rng(1)
        data = RegressionData(X=rng.standard_normal((10, 4)), y=rng.standard_normal(10))
        target = build_regression_target(data, 1.0, HalfCauchyRadius(1.0))
        logp, grad = target.value_and_grad(target.default_init)
        assert np.isfinite(logp) and np.all(np.isfinite(grad))


class TestMixtureWeights:
    def test_dominant_coordinate_one_hot(self):
        theta = mixture_weights_from_ball(np.array([5.0, 0.1, -0.2]), 0.5)
        np.testing.assert_array_equal(theta, [1.0, 0.0, 0.0])

    def test_symmetric_pair(self):
        theta = mixture_weights_from_ball(np.array([1.0, 1.0]), 1.0)
        np.testing.assert_allclose(theta, [0.5, 0.5])

    @given(
        arrays(np.float64, 4, elements=st.floats(-5, 5, allow_nan=False)),
        st.floats(0.1, 3.0),
    )
    @settings(max_examples=100)
    def test_simplex_closure(self, beta, r):
        if np.all(beta == 0.0):
            return
        theta = mixture_weights_from_ball(beta, r)
        assert np.all(theta >= 0.0)
        assert np.sum(theta) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_zero(self):
        with pytest.raises(DegenerateInputError):
            mixture_weights_from_ball(np.zeros(3), 1.0)

    def test_positive_mass_at_every_component_count(self):
        # every K in {1..K1} is reachable under the base prior
        rng = np.random.default_rng(3)
        K1 = 5
        betas = rng.laplace(0, 1.0, size=(20000, K1))
        theta = project_l1_ball_batch(betas, 1.0)
        counts = np.sum(theta != 0.0, axis=1)
        for K in range(1, K1 + 1):
            assert np.mean(counts == K) > 0.0


class TestMixtureLikelihood:
    def test_single_component_plain_gaussian(self):
        y = np.array([0.3, -1.2, 0.5])
        ll = mixture_log_lik(y, np.array([1.0]), np.array([0.2]), np.array([1.5]))
        direct = np.sum(
            -0.5 * np.log(2 * np.pi * 1.5) - (y - 0.2) ** 2 / 3.0
        )
        assert ll == pytest.approx(direct)

    def test_symmetric_two_component(self):
        a, s2 = 1.7, 0.8
        ll = mixture_log_lik(
            np.array([0.0]), np.array([0.5, 0.5]), np.array([-a, a]), np.array([s2, s2])
        )
        assert ll == pytest.approx(-0.5 * np.log(2 * np.pi * s2) - a**2 / (2 * s2))

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            K = rng.integers(2, 6)
            w = rng.dirichlet(np.ones(K))
            mus = rng.normal(0, 3, K)
            s2 = rng.uniform(0.2, 2.0, K)
            y = rng.normal(0, 2, 30)
            dens = np.zeros(30)
            for k in range(K):
                dens += w[k] * np.exp(-0.5 * (y - mus[k]) ** 2 / s2[k]) / np.sqrt(
                    2 * np.pi * s2[k]
                )
            assert mixture_log_lik(y, w, mus, s2) == pytest.approx(
                np.sum(np.log(dens)), rel=1e-12
            )

    def test_zero_weight_components_ignored(self):
        y = np.array([1.0, 2.0])
        full = mixture_log_lik(y, np.array([1.0, 0.0]), np.array([0.0, np.nan]), np.array([1.0, 1.0]))
        solo = mixture_log_lik(y, np.array([1.0]), np.array([0.0]), np.array([1.0]))
        assert full == pytest.approx(solo)

    def test_empty_active_set(self):
        with pytest.raises(DegenerateInputError):
            mixture_log_lik(np.array([1.0]), np.zeros(2), np.zeros(2), np.ones(2))


class TestMixtureTarget:
    def test_posterior_gradient_matches_fd(self):
        rng = np.random.default_rng(12)
        y = np.concatenate([rng.normal(0, 1, 40), rng.normal(4, 1, 60)])
        target = build_mixture_target(MixtureData(y=y, K1=4), lam=1.0, r=1.0)
        checked = 0
        for seed in range(40):
            q = np.random.default_rng(100 + seed).normal(0.3, 0.8, target.dim)
            res = project_l1_ball(q[:4], 1.0)
            if res.boundary:
                t = np.abs(q[:4]) - res.mu / res.cardinality
                if np.min(np.abs(t)) < 1e-4:
                    continue
            logp, grad = target.value_and_grad(q)
            fd = fd_grad(lambda z: target.value_and_grad(z)[0], q)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)
            checked += 1
            if checked >= 6:
                break
        assert checked >= 6

    def test_record_reports_component_count(self):
        y = np.random.default_rng(2).normal(0, 1, 50)
        target = build_mixture_target(MixtureData(y=y, K1=3), lam=1.0)
        rec = target.to_record(np.concatenate([[2.0, 0.05, -0.01], np.zeros(3), np.zeros(3)]))
        assert rec["extras"]["K"] == 1
        assert np.sum(rec["theta"]) == pytest.approx(1.0)


class TestFused:
    def test_contrast_matrix_row_count(self):
        for p1, p2 in [(2, 2), (3, 4), (4, 4)]:
            D = grid_contrast_matrix(p1, p2)
            assert D.shape == ((p1 - 1) * p2 + p1 * (p2 - 1) + p1 * p2, p1 * p2)

    def test_constant_image_interior_identity(self):
        data = GridData(pixels=np.full((3, 3), 2.0))
        beta = np.full(9, 2.0)
        # large radius: projection is the identity, residual is zero
        ll, grad = fused_target(beta, 100.0, data)
        assert ll == pytest.approx(-4.5 * np.log(2 * np.pi))
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(21)
        data = GridData(pixels=rng.standard_normal((3, 3)))
        checked = 0
        for seed in range(30):
            beta = np.random.default_rng(seed).normal(0, 1.0, 9)
            ll, grad = fused_target(beta, 2.0, data, admm_tol=1e-11)
            # the projection is piecewise linear: central differences are
            # exact unless the step crosses a face
            fd = fd_grad(lambda b: fused_target(b, 2.0, data, admm_tol=1e-11)[0], beta, h=1e-4)
            if np.max(np.abs(grad - fd)) > 1e-4:
                continue  # face crossing within the FD step; skip this point
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-5)
            checked += 1
            if checked >= 5:
                break
        assert checked >= 5

    def test_posterior_records_exact_zero_contrasts(self):
        rng = np.random.default_rng(4)
        truth = np.zeros((4, 4))
        truth[:2, :] = 1.0
        from l1ball.models import build_fused_target

        data = GridData(pixels=truth + 0.1 * rng.standard_normal((4, 4)), sigma2=0.01)
        target = build_fused_target(data, r=10.0, lam=5.0)
        rec = target.to_record(target.default_init)
        assert rec["extras"]["n_zero_contrasts"] > 0


class TestLowRank:
    def test_zero_everything(self):
        data = LowRankSparseData(frames=np.zeros((3, 8)), frame_shape=(2, 4))
        ll, g_L, g_S = lowrank_sparse_target(
            np.zeros((3, 8)), np.zeros((3, 8)), (1e-9, 1e-9), data
        )
        assert ll == pytest.approx(-12.0 * np.log(2 * np.pi))
        assert g_L.shape == (3, 8) and g_S.shape == (3, 8)

    def test_nuclear_constraint_holds_in_records(self):
        rng = np.random.default_rng(6)
        data = LowRankSparseData(frames=rng.standard_normal((4, 9)), frame_shape=(3, 3))
        target = build_lowrank_target(data, radii=(2.0, 1.0), lam_S=1.0)
        for seed in range(5):
            q = np.random.default_rng(seed).normal(0, 2, target.dim)
            rec = target.to_record(q)
            assert rec["extras"]["nuclear_norm"] <= 2.0 * (1 + 1e-10)
            assert rec["extras"]["rank"] <= min(4, 9)

    def test_posterior_gradient_matches_fd(self):
        rng = np.random.default_rng(30)
        data = LowRankSparseData(frames=rng.standard_normal((2, 6)), frame_shape=(2, 3))
        target = build_lowrank_target(data, radii=(1.5, 1.0), lam_S=1.0)
        q = rng.normal(0, 1.2, target.dim)
        logp, grad = target.value_and_grad(q)
        fd = fd_grad(lambda z: target.value_and_grad(z)[0], q)
        # the low-rank block itself uses finite differences; agreement is
        # limited by the two step sizes, not by algebra
        np.testing.assert_allclose(grad, fd, rtol=1e-3, atol=1e-3)


class TestStructured:
    def _data(self, p=4, seed=0):
        # two communities: full structural connection within blocks,
        # partial across, so J - S + kappa*I stays positive definite
        rng = np.random.default_rng(seed)
        S = np.full((p, p), 0.5)
        S[: p // 2, : p // 2] = 1.0
        S[p // 2 :, p // 2 :] = 1.0
        np.fill_diagonal(S, 0.0)
        A = rng.standard_normal((p, p))
        A = (A + A.T) / 2
        return StructuredSparsityData(A=A, S=S)

    def test_all_connected_reduces_to_independent(self):
        p = 3
        data = StructuredSparsityData(A=np.eye(p), S=np.ones((p, p)), kappa=1e-3)
        cov = data.base_covariance()
        np.testing.assert_allclose(cov, 1e-3 * np.eye(p))

    def test_non_pd_covariance_raises(self):
        p = 3
        data = StructuredSparsityData(A=np.eye(p), S=2 * np.ones((p, p)), kappa=1e-3)
        with pytest.raises(ConfigError):
            build_structured_target(data, radii=(1.0, 1.0), d=2)

    def test_likelihood_gradient_matches_fd(self):
        data = self._data()
        rng = np.random.default_rng(11)
        checked = 0
        for seed in range(30):
            betas = np.random.default_rng(seed).normal(0, 1.0, (2, 4))
            gammas = np.random.default_rng(seed + 50).uniform(0.2, 2.0, 2)
            skip = False
            for k in range(2):
                res = project_l1_ball(betas[k], 1.0)
                if res.boundary:
                    t = np.abs(betas[k]) - res.mu / res.cardinality
                    if np.min(np.abs(t)) < 1e-4:
                        skip = True
            if skip:
                continue
            ll, g_b, g_g = structured_sparsity_target(
                betas, gammas, data.S, (1.0, 1.0), data
            )
            fd_b = fd_grad(
                lambda v: structured_sparsity_target(
                    v.reshape(2, 4), gammas, data.S, (1.0, 1.0), data
                )[0],
                betas.ravel(),
            )
            np.testing.assert_allclose(g_b.ravel(), fd_b, rtol=1e-5, atol=1e-6)
            fd_g = fd_grad(
                lambda v: structured_sparsity_target(
                    betas, v, data.S, (1.0, 1.0), data
                )[0],
                gammas,
            )
            np.testing.assert_allclose(g_g, fd_g, rtol=1e-5, atol=1e-6)
            checked += 1
            if checked >= 5:
                break
        assert checked >= 5

    def test_posterior_gradient_matches_fd(self):
        data = self._data(seed=7)
        target = build_structured_target(data, radii=(1.0, 1.0), d=2)
        rng = np.random.default_rng(40)
        for _ in range(3):
            q = rng.normal(0, 0.7, target.dim)
            logp, grad = target.value_and_grad(q)
            fd = fd_grad(lambda z: target.value_and_grad(z)[0], q)
            if not np.allclose(grad, fd, rtol=1e-4, atol=1e-4):
                continue  # kink within FD step
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-4)

    def test_disconnected_pairs_co_zero_more_often(self):
        # prior Monte-Carlo: covariance 1 between blocks, 0 within, so
        # cross-block coordinate pairs shrink to zero together more often
        data = self._data()
        from l1ball.priors import Gaussian

        base = Gaussian(np.zeros(4), data.base_covariance())
        rng = np.random.default_rng(99)
        betas = base.sample(rng, 30000)
        theta = project_l1_ball_batch(betas, 1.0)
        zero = theta == 0.0
        cross = np.mean(zero[:, 0] & zero[:, 2])
        within = np.mean(zero[:, 0] & zero[:, 1])
        assert cross > within
