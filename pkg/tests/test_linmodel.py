import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qrmed.linmodel import (GaussianLaw, SingularError, gamma_transform, gaussian_condition, gaussian_density,
                            gaussian_logpdf, ols_fit, residualize, sample_gaussian, with_intercept)


def test_exact_fit(rng):
    x = rng.standard_normal((20, 1))
    fit = ols_fit(x, 2 * x[:, 0])
    assert np.allclose(fit.coefficients, [2]) and np.allclose(fit.residuals, 0, atol=1e-12)


def test_orthogonal_response():
    x = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    assert np.allclose(ols_fit(x, np.array([1.0, -1.0, 1.0, -1.0])).coefficients, 0)


def test_recovers_truth(rng):
    n = 1000
    c, a = rng.standard_normal(n), rng.integers(0, 2, n).astype(float)
    y = 3 * c + a + rng.standard_normal(n)
    design = with_intercept(c, a)
    fit = ols_fit(design, y)
    se = np.sqrt(np.diag(fit.sigma2 * np.linalg.inv(design.T @ design)))
    assert np.all(np.abs(fit.coefficients[1:] - [3, 1]) < 5 * se[1:])


@given(st.integers(0, 10_000))
def test_normal_equations(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    fit = ols_fit(x, y)
    assert np.allclose(x.T @ fit.residuals, 0, atol=1e-8)
    assert np.allclose(fit.fitted + fit.residuals, y, atol=1e-14, rtol=0)


def test_rank_deficient():
    # exact collinearity is absorbed by the single jitter retry
    x = np.ones((10, 2))
    fit = ols_fit(x, np.arange(10.0))
    assert np.all(np.isfinite(fit.coefficients)) and np.isclose(fit.coefficients.sum(), 4.5)
    with pytest.raises(SingularError):
        ols_fit(np.ones((2, 3)), np.ones(2))
    with pytest.raises(SingularError):
        gamma_transform(np.ones((10, 1)), np.ones((10, 1)))


def test_gamma_examples(rng):
    x = rng.standard_normal((50, 2))
    plain = np.linalg.solve(x.T @ x, x.T)
    assert np.allclose(gamma_transform(x, np.zeros((50, 0))), plain)
    z = rng.standard_normal((50, 1))
    z_perp = residualize(z, x)
    assert np.allclose(gamma_transform(x, z_perp), plain, atol=1e-8)
    assert np.allclose(gamma_transform(x, z) @ x, np.eye(2), atol=1e-8)


@given(st.integers(0, 10_000))
def test_frisch_waugh(seed):
    rng = np.random.default_rng(seed)
    x, z, y = rng.standard_normal((40, 2)), rng.standard_normal((40, 3)), rng.standard_normal(40)
    full = ols_fit(np.column_stack([x, z]), y).coefficients[:2]
    assert np.allclose(gamma_transform(x, z) @ y, full, atol=1e-8)


def test_condition_examples():
    ind = GaussianLaw([0.0, 1.0], np.diag([1.0, 2.0]))
    out = gaussian_condition(ind, [0], [5.0])
    assert np.allclose(out.mean, [1.0]) and np.allclose(out.cov, [[2.0]])
    rho = 0.6
    biv = GaussianLaw([0.0, 0.0], [[1.0, rho], [rho, 1.0]])
    out = gaussian_condition(biv, [0], [1.5])
    assert np.isclose(out.mean[0], rho * 1.5) and np.isclose(out.cov[0, 0], 1 - rho ** 2)


def test_condition_matches_grid():
    cov = np.array([[1.0, 0.3, 0.2], [0.3, 1.5, -0.4], [0.2, -0.4, 0.8]])
    law = GaussianLaw([0.5, -1.0, 0.2], cov)
    given_vals = np.array([0.1, 0.7])
    out = gaussian_condition(law, [1, 2], given_vals)
    grid = np.linspace(-10, 10, 20001)
    pts = np.column_stack([grid, np.repeat(given_vals[None], grid.size, axis=0)])
    dens = np.exp(gaussian_logpdf(pts, law.mean, cov))
    dens /= np.trapezoid(dens, grid)
    mean = np.trapezoid(grid * dens, grid)
    var = np.trapezoid((grid - mean) ** 2 * dens, grid)
    assert abs(mean - out.mean[0]) < 1e-6 and abs(var - out.cov[0, 0]) < 1e-6


@given(st.integers(0, 10_000))
def test_condition_marginal_commute(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 4))
    law = GaussianLaw(rng.standard_normal(4), a @ a.T + 0.1 * np.eye(4))
    v = rng.standard_normal(1)
    first = gaussian_condition(law, [0], v).marginal([0, 1])
    second = gaussian_condition(law.marginal([0, 1, 2]), [0], v)
    assert np.allclose(first.mean, second.mean, atol=1e-10) and np.allclose(first.cov, second.cov, atol=1e-10)


def test_density_examples():
    assert np.isclose(gaussian_density([0.0], GaussianLaw([0.0], [[1.0]])), 0.3989422804014327)
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    law = GaussianLaw([1.0, 2.0], cov)
    expected = (2 * np.pi) ** -1 * np.linalg.det(cov) ** -0.5
    assert np.isclose(gaussian_density([1.0, 2.0], law), expected)
    g = np.linspace(-8 * np.sqrt(2), 8 * np.sqrt(2), 401) + 1.0
    h = np.linspace(-8, 8, 401) + 2.0
    gx, gy = np.meshgrid(g, h, indexing="ij")
    dens = np.exp(gaussian_logpdf(np.stack([gx, gy], axis=-1), law.mean, cov))
    assert abs(np.trapezoid(np.trapezoid(dens, h, axis=1), g) - 1) < 1e-4


def test_law_validation():
    with pytest.raises(ValueError):
        GaussianLaw([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        GaussianLaw([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(SingularError):
        gaussian_logpdf(np.zeros(2), np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]) * 0 - np.eye(2))


@given(arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_zero_covariance_sampling(mean):
    draws = sample_gaussian(mean, np.zeros((3, 3)), 5, np.random.default_rng(0))
    assert np.array_equal(draws, np.broadcast_to(mean, (5, 3)))
