"""GP regression against closed-form and dense linear-algebra oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from auxmix.gp import (
    GpModel,
    KernelParams,
    Posterior,
    build_gp,
    fit,
    gram_matrix,
    log_marginal_likelihood,
    matern_kernel,
    posterior_at,
)

# Closed forms at unit distance with unit scales, frozen from 50-digit
# evaluation of (1+sqrt(3))exp(-sqrt(3)) and (1+sqrt(5)+5/3)exp(-sqrt(5)).
MATERN32_AT_ONE = 0.4833577245965077
MATERN52_AT_ONE = 0.5239941088318203


def unit_params(nu, d=1, **kw):
    return KernelParams(length_scales=tuple([1.0] * d), nu=nu, **kw)


def dense_posterior(model: GpModel, x) -> tuple[float, float]:
    """Independent O(n^3) posterior via explicit matrix inverse."""
    n = model.n_observations
    k = gram_matrix(model.points, model.points, model.kernel)
    k = k + (model.kernel.noise_variance + model.kernel.jitter) * np.eye(n)
    k_inv = np.linalg.inv(k)
    kx = gram_matrix(np.atleast_2d(np.asarray(x, dtype=float)), model.points, model.kernel)[0]
    resid = model.observations - model.mean_offset
    mean = model.mean_offset + float(kx @ k_inv @ resid)
    var = model.kernel.signal_variance - float(kx @ k_inv @ kx)
    return mean, math.sqrt(max(var, 0.0))


# ------------------------------------------------------------------ kernel

def test_matern_frozen_unit_distance_values():
    assert matern_kernel([0.0], [1.0], unit_params(1.5)) == pytest.approx(
        MATERN32_AT_ONE, abs=1e-12
    )
    assert matern_kernel([0.0], [1.0], unit_params(2.5)) == pytest.approx(
        MATERN52_AT_ONE, abs=1e-12
    )


def test_matern_at_zero_distance_is_signal_variance():
    p = unit_params(2.5, signal_variance=2.5)
    assert matern_kernel([0.3], [0.3], p) == pytest.approx(2.5, abs=1e-12)


def test_matern_symmetry_and_positivity():
    rng = np.random.default_rng(0)
    p = KernelParams(length_scales=(0.7, 1.3, 2.0), signal_variance=1.7, nu=1.5)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        kab = matern_kernel(a, b, p)
        kba = matern_kernel(b, a, p)
        assert kab == pytest.approx(kba, rel=1e-15)
        assert 0 < kab <= p.signal_variance + 1e-15


def test_matern_ard_scaling_invariance():
    # Scaling one coordinate and its length scale together leaves the kernel
    # unchanged; that is what makes the kernel ARD.
    base = KernelParams(length_scales=(1.0, 1.0), nu=2.5)
    scaled = KernelParams(length_scales=(5.0, 1.0), nu=2.5)
    a, b = [0.2, 0.4], [0.9, 0.1]
    a_s, b_s = [1.0, 0.4], [4.5, 0.1]
    assert matern_kernel(a_s, b_s, scaled) == pytest.approx(
        matern_kernel(a, b, base), rel=1e-12
    )


def test_matern_longer_scale_means_slower_decay():
    near = KernelParams(length_scales=(0.5,), nu=2.5)
    far = KernelParams(length_scales=(5.0,), nu=2.5)
    assert matern_kernel([0.0], [1.0], far) > matern_kernel([0.0], [1.0], near)


def test_gram_matrix_psd():
    rng = np.random.default_rng(3)
    x = rng.random((15, 2))
    for nu in (1.5, 2.5):
        p = KernelParams(length_scales=(0.4, 1.1), signal_variance=2.0, nu=nu)
        k = gram_matrix(x, x, p)
        assert np.allclose(k, k.T, atol=1e-14)
        eigvals = np.linalg.eigvalsh(k)
        assert eigvals.min() > -1e-9


def test_matern_dimension_mismatch():
    with pytest.raises(ValueError):
        matern_kernel([0.0, 1.0], [1.0], unit_params(1.5, d=1))


def test_kernel_params_validation():
    with pytest.raises(ValueError):
        KernelParams(length_scales=())
    with pytest.raises(ValueError):
        KernelParams(length_scales=(0.0,))
    with pytest.raises(ValueError):
        KernelParams(length_scales=(1.0,), signal_variance=-1.0)
    with pytest.raises(ValueError):
        KernelParams(length_scales=(1.0,), noise_variance=-0.1)
    with pytest.raises(ValueError):
        KernelParams(length_scales=(1.0,), nu=0.5)


# --------------------------------------------------------------- posterior

def test_posterior_matches_dense_inverse_oracle():
    rng = np.random.default_rng(7)
    for trial in range(25):
        n = int(rng.integers(1, 21))
        d = int(rng.integers(1, 4))
        x = rng.random((n, d))
        y = rng.normal(size=n)
        params = KernelParams(
            length_scales=tuple(np.exp(rng.uniform(-1.5, 1.5, size=d))),
            signal_variance=float(np.exp(rng.uniform(-1, 2))),
            noise_variance=float(np.exp(rng.uniform(-6, -1))),
            nu=1.5 if trial % 2 else 2.5,
        )
        model = build_gp(x, y, params)
        for _ in range(4):
            q = rng.random(d)
            post = posterior_at(model, q)
            mean_ref, std_ref = dense_posterior(model, q)
            assert post.mean == pytest.approx(mean_ref, abs=1e-8)
            assert post.std == pytest.approx(std_ref, abs=1e-8)


def test_posterior_interpolates_with_tiny_noise():
    x = np.array([[0.1], [0.5], [0.9]])
    y = np.array([1.0, -2.0, 0.5])
    model = build_gp(x, y, unit_params(2.5, noise_variance=0.0))
    for xi, yi in zip(x, y):
        post = posterior_at(model, xi)
        assert post.mean == pytest.approx(yi, abs=1e-3)
        assert post.std < 1e-3


def test_posterior_prior_model_without_observations():
    model = build_gp(np.empty((0, 2)), [], unit_params(2.5, d=2, signal_variance=4.0))
    post = posterior_at(model, [0.3, 0.3])
    assert post == Posterior(mean=0.0, std=2.0)


def test_posterior_variance_shrinks_with_more_data():
    rng = np.random.default_rng(12)
    x = rng.random((12, 1))
    y = rng.normal(size=12)
    params = unit_params(2.5, noise_variance=1e-4)
    q = [0.42]
    stds = []
    for n in (0, 3, 6, 12):
        model = build_gp(x[:n], y[:n], params, mean_offset=0.0)
        stds.append(posterior_at(model, q).std)
    assert all(stds[i + 1] <= stds[i] + 1e-9 for i in range(len(stds) - 1))


def test_posterior_mean_reverts_to_offset_far_away():
    x = np.array([[0.0]])
    y = np.array([5.0])
    model = build_gp(x, y, unit_params(2.5, signal_variance=1.0), mean_offset=1.0)
    post = posterior_at(model, [500.0])
    assert post.mean == pytest.approx(1.0, abs=1e-6)
    assert post.std == pytest.approx(1.0, abs=1e-6)


def test_posterior_query_dimension_check():
    model = build_gp([[0.0]], [1.0], unit_params(2.5))
    with pytest.raises(ValueError):
        posterior_at(model, [0.0, 1.0])


def test_build_gp_rejects_bad_shapes_and_values():
    with pytest.raises(ValueError):
        build_gp([[0.0], [1.0]], [1.0], unit_params(2.5))
    with pytest.raises(ValueError):
        build_gp([[float("nan")]], [1.0], unit_params(2.5))


def test_duplicate_points_with_zero_noise_still_factor():
    x = np.array([[0.5], [0.5], [0.5]])
    y = np.array([1.0, 1.0, 1.0])
    model = build_gp(x, y, unit_params(2.5, noise_variance=0.0, jitter=1e-10))
    assert model.kernel.jitter >= 1e-10
    post = posterior_at(model, [0.5])
    assert math.isfinite(post.mean) and math.isfinite(post.std)


def test_jitter_escalation_rescues_mildly_indefinite_matrix():
    from scipy.linalg import LinAlgError, cho_solve

    from auxmix.gp import _factor_with_jitter

    eps = 3e-5  # smallest eigenvalue is -eps: only the final 1e-4 step rescues it
    k = np.array([[1.0, 1.0 + eps], [1.0 + eps, 1.0]])
    chol, jitter_used = _factor_with_jitter(k, 1e-10)
    assert jitter_used == pytest.approx(1e-4)
    solved = cho_solve(chol, np.ones(2))
    assert np.all(np.isfinite(solved))


def test_jitter_escalation_gives_up_beyond_cap():
    from scipy.linalg import LinAlgError

    from auxmix.gp import _factor_with_jitter

    k = np.array([[1.0, 1.1], [1.1, 1.0]])  # eigenvalues 2.1 and -0.1
    with pytest.raises(LinAlgError):
        _factor_with_jitter(k, 1e-10)


# ------------------------------------------------- marginal likelihood, fit

def dense_lml(x, y, params):
    y = np.asarray(y, dtype=float)
    n = y.size
    yc = y - y.mean()
    k = gram_matrix(x, x, params) + (params.noise_variance + params.jitter) * np.eye(n)
    sign, logdet = np.linalg.slogdet(k)
    assert sign > 0
    return float(-0.5 * yc @ np.linalg.inv(k) @ yc - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def test_log_marginal_likelihood_matches_dense_formula():
    rng = np.random.default_rng(5)
    x = rng.random((10, 2))
    y = rng.normal(size=10)
    params = KernelParams(
        length_scales=(0.8, 1.2), signal_variance=1.5, noise_variance=0.05, nu=2.5
    )
    got = log_marginal_likelihood(x, y, params)
    assert got == pytest.approx(dense_lml(x, y, params), abs=1e-8)


def test_fit_is_deterministic():
    rng = np.random.default_rng(8)
    x = rng.random((12, 2))
    y = np.sin(3 * x[:, 0]) + 0.1 * rng.normal(size=12)
    m1 = fit(x, y)
    m2 = fit(x, y)
    assert m1.kernel == m2.kernel
    assert m1.mean_offset == m2.mean_offset


def test_fit_beats_midpoint_candidate():
    rng = np.random.default_rng(9)
    x = rng.random((15, 1))
    y = np.sin(6 * x[:, 0])
    model = fit(x, y)
    mid = KernelParams(
        length_scales=(math.sqrt(1e-2 * 10.0),),
        signal_variance=math.sqrt(1e-2 * 1e2),
        noise_variance=math.sqrt(1e-6 * 1.0),
        nu=2.5,
    )
    lml_fit = log_marginal_likelihood(x, y, model.kernel)
    lml_mid = log_marginal_likelihood(x, y, mid)
    assert lml_fit >= lml_mid - 1e-12


def test_fit_centers_on_sample_mean():
    y = [3.0, 5.0, 4.0]
    model = fit([[0.0], [0.5], [1.0]], y)
    assert model.mean_offset == pytest.approx(4.0)


def test_fit_respects_search_box():
    rng = np.random.default_rng(10)
    x = rng.random((10, 3))
    y = rng.normal(size=10)
    model = fit(x, y, nu=1.5)
    assert model.kernel.nu == 1.5
    assert all(1e-2 <= l <= 10.0 for l in model.kernel.length_scales)
    assert 1e-2 <= model.kernel.signal_variance <= 1e2
    assert 1e-6 <= model.kernel.noise_variance <= 1.0


def test_fit_requires_data():
    with pytest.raises(ValueError):
        fit(np.empty((0, 1)), [])


def test_fit_accepts_1d_points():
    model = fit([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    assert model.points.shape == (3, 1)
    assert math.isfinite(posterior_at(model, [0.25]).mean)
