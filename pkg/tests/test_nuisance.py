import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qrmed.dataset import Dataset
from qrmed.nuisance import (BernoulliMediatorLaw, GaussianMediatorLaw, MeanSpec, NuisanceError, PropensityModel,
                            ca_spec, density_eval, fit_binary_glm, fit_bundle, fit_mean, fit_mediator_law,
                            fit_propensity, full_spec, make_misspecified, parent_spec, sample_conditional)


def simple(n, rng, theta=2.0, p=1):
    c = rng.standard_normal((n, 1))
    a = (rng.random(n) < 0.5).astype(float)
    m = theta * a[:, None] + rng.standard_normal((n, p))
    y = c[:, 0] + a + m.sum(axis=1) + rng.standard_normal(n)
    return Dataset(c, a, m, y)


def law2():
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    return GaussianMediatorLaw(np.array([0.1, -0.2]), np.array([[0.5], [1.0]]), np.array([1.0, -1.0]), cov)


def test_propensity_null(rng):
    ds = simple(10_000, rng)
    e1 = fit_propensity(ds).e1(ds.c)
    assert e1.min() >= 0.45 and e1.max() <= 0.55


def test_propensity_zero_model_and_clip():
    c = np.linspace(-3, 3, 7)[:, None]
    assert np.allclose(PropensityModel("probit", np.zeros(2)).e1(c), 0.5)
    low = PropensityModel("probit", np.array([-3.090232306167813, 0.0]), clip=0.01)
    assert np.allclose(low.e1(c), 0.01)


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from(["probit", "logit"]))
def test_propensity_sums_to_one(b0, b1, link):
    pr = PropensityModel(link, np.array([b0, b1])).probs(np.linspace(-4, 4, 9)[:, None])
    assert np.all(pr.sum(axis=1) == 1.0) and pr.min() >= 0.01


def test_propensity_errors(rng):
    c = np.linspace(-1, 1, 40)[:, None]
    with pytest.raises(NuisanceError):
        fit_binary_glm(np.column_stack([np.ones(40), c]), (c[:, 0] > 0).astype(float), "logit")
    ds = Dataset(c, np.zeros(40), rng.standard_normal((40, 1)), np.zeros(40))
    with pytest.raises(NuisanceError):
        fit_propensity(ds)
    with pytest.raises(ValueError):
        PropensityModel("cauchit", np.zeros(2))


def test_glm_matches_reference(rng):
    n = 2000
    x = np.column_stack([np.ones(n), rng.standard_normal(n)])
    y = (rng.random(n) < stats.norm.cdf(x @ [0.3, -0.8])).astype(float)
    beta = fit_binary_glm(x, y, "probit")
    from scipy.optimize import minimize
    nll = lambda b: -np.sum(stats.norm.logcdf((2 * y - 1) * (x @ b)))  # noqa: E731
    ref = minimize(nll, np.zeros(2), method="BFGS", options={"gtol": 1e-10}).x
    assert np.allclose(beta, ref, atol=1e-5)


def test_mediator_law_recovery(rng):
    ds = simple(5000, rng)
    law = fit_mediator_law(ds)
    x = np.column_stack([np.ones(ds.n), ds.c, ds.a])
    se = np.sqrt(law.cov[0, 0] * np.linalg.inv(x.T @ x)[2, 2])
    assert abs(law.theta_ma[0] - 2.0) < 5 * se
    assert abs(law.cov[0, 0] - 1.0) < 0.1


def test_mediator_law_independent_pair(rng):
    n = 5000
    law = fit_mediator_law(simple(n, rng, p=2))
    assert abs(law.cov[0, 1]) < 5 * np.sqrt(law.cov[0, 0] * law.cov[1, 1] / n)


def test_constant_mediator_rejected(rng):
    ds = Dataset(rng.standard_normal((50, 1)), np.arange(50) % 2, np.ones((50, 1)), rng.standard_normal(50))
    with pytest.raises(NuisanceError):
        fit_mediator_law(ds)


def test_density_at_mean():
    law = GaussianMediatorLaw(np.zeros(2), np.zeros((2, 1)), np.zeros(2), np.eye(2))
    c = np.zeros((1, 1))
    assert np.isclose(density_eval(law, [1], np.zeros((1, 1)), c, 0.0)[0], 1 / np.sqrt(2 * np.pi))


@given(st.integers(0, 10_000), st.sampled_from([0.0, 1.0]))
def test_chain_rule(seed, a):
    rng = np.random.default_rng(seed)
    law, c, m = law2(), rng.standard_normal((5, 1)), rng.standard_normal((5, 2))
    joint = density_eval(law, [0, 1], m, c, a)
    part = density_eval(law, [0], m[:, :1], c, a) * density_eval(law, [1], m[:, 1:], c, a, [0], m[:, :1])
    assert np.allclose(joint, part, rtol=1e-10, atol=0)


def test_marginal_mixture(rng):
    law, c = law2(), rng.standard_normal((6, 1))
    prop = PropensityModel("probit", np.array([0.2, 0.7]))
    vals = rng.standard_normal((6, 1))
    mix = density_eval(law, [1], vals, c, "marginal", propensity=prop)
    e1 = prop.e1(c)
    sd = np.sqrt(law.cov[1, 1])
    ref = sum(w * stats.norm.pdf(vals[:, 0], law.mean(c, a)[:, 1], sd) for a, w in ((0.0, 1 - e1), (1.0, e1)))
    assert np.allclose(mix, ref, rtol=1e-8, atol=0)
    with pytest.raises(ValueError):
        density_eval(law, [1], vals, c, "marginal")
    with pytest.raises(ValueError):
        density_eval(law, [1], vals, c, 0.0, [1], vals)


def test_density_integrates_to_one():
    law, c = law2(), np.array([[0.3]])
    for k in range(2):
        sd = np.sqrt(law.cov[k, k])
        mu = law.mean(c, 1.0)[0, k]
        grid = np.linspace(mu - 8 * sd, mu + 8 * sd, 4001)
        dens = density_eval(law, [k], grid.reshape(1, -1, 1), c, 1.0)[0]
        assert abs(np.trapezoid(dens, grid) - 1) < 1e-4


def test_sampling_moments_ks_and_determinism():
    law, c = law2(), np.array([[0.5]])
    draws = sample_conditional(law, [1], c, 1.0, 100_000, np.random.default_rng(3))[0, :, 0]
    mu, sd = law.mean(c, 1.0)[0, 1], np.sqrt(law.cov[1, 1])
    assert abs(draws.mean() - mu) < 4 * sd / np.sqrt(draws.size)
    assert stats.kstest(draws, stats.norm(mu, sd).cdf).statistic <= 0.01
    again = sample_conditional(law, [1], c, 1.0, 100_000, np.random.default_rng(3))[0, :, 0]
    assert np.array_equal(draws, again)
    flat = GaussianMediatorLaw(np.ones(1), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)))
    assert np.all(sample_conditional(flat, [0], c, 0.0, 10, np.random.default_rng(0)) == 1.0)


def test_bernoulli_law_is_a_pmf(rng):
    law = BernoulliMediatorLaw(rng.uniform(-1, 1, (3, 3)))
    c = rng.standard_normal((4, 1))
    states = np.array(list(itertools.product([0.0, 1.0], repeat=3)))
    vals = np.broadcast_to(states, (4, 8, 3))
    total = np.exp(law.logpdf([0, 1, 2], vals, c, 1.0)).sum(axis=1)
    assert np.allclose(total, 1.0)
    draws = law.sample([0, 1, 2], c, 1.0, 50_000, np.random.default_rng(1))
    assert np.allclose(draws.mean(axis=1), law.mean(c, 1.0), atol=0.02)


def test_discrete_fit_requires_binary(rng):
    ds = simple(100, rng)
    with pytest.raises(NuisanceError):
        fit_mediator_law(ds, discrete=True)


def test_fit_mean_examples(rng):
    n = 20_000
    ds = simple(n, rng)
    full = fit_mean(ds, full_spec(1))
    design = full_spec(1).design(ds)
    resid = ds.y - design @ full.coefficients
    se = np.sqrt(resid.var() * np.diag(np.linalg.inv(design.T @ design)))
    assert np.all(np.abs(full.coefficients[1:] - [1, 1, 1]) < 5 * se[1:])
    empty = fit_mean(ds, MeanSpec(False, False, ()))
    assert np.isclose(empty.coefficients[0], ds.y.mean())
    ca = fit_mean(ds, ca_spec())
    x = np.column_stack([np.ones(n), ds.c, ds.a])
    assert np.allclose(ca.coefficients, np.linalg.lstsq(x, ds.y, rcond=None)[0])
    assert np.allclose(ca.predict(ds.c, ds.a), x @ ca.coefficients)


def test_parent_spec_ordering():
    assert parent_spec(2, [3, 0]).mediators == (2, 0, 3)


def test_predict_batched(rng):
    ds = simple(200, rng, p=2)
    model = fit_mean(ds, full_spec(2))
    m = rng.standard_normal((200, 5, 2))
    batched = model.predict(ds.c, 1.0, m)
    assert batched.shape == (200, 5)
    assert np.allclose(batched[:, 3], model.predict(ds.c, 1.0, m[:, 3]))


def test_make_misspecified(rng):
    ds = simple(500, rng)
    bundle = fit_bundle(ds)
    assert make_misspecified(bundle, []) is bundle
    wl = make_misspecified(bundle, "wrong_link")
    assert wl.propensity.link == "logit" and wl.mediators is bundle.mediators
    assert wl.mean(full_spec(1)) is bundle.mean(full_spec(1))
    wo = make_misspecified(bundle, ["wrong_outcome"])
    assert wo.propensity is bundle.propensity and wo.mean(full_spec(1)).is_linear
    with pytest.raises(ValueError):
        make_misspecified(bundle, "wrong_everything")
