import math

import numpy as np
import pytest
from scipy import stats
from hypothesis import given
from hypothesis import strategies as st
from oracles import aipw_zeta_p1

from qrmed.dataset import Dataset
from qrmed.effects_ols import fit_ols_models
from qrmed.effects_qr import (McConfig, ScoreTerms, bootstrap_many, fast_qr, qr_dm, qr_effects, qr_im_avg, qr_tm,
                              score_kappa, score_variance, score_varrho, score_zeta, strategy_effects,
                              symmetric_t_bootstrap)
from qrmed.graph import cpdag_of_dag, enumerate_mec
from qrmed.nuisance import NuisanceBundle, PropensityModel, ca_spec, fit_bundle, full_spec, parent_spec
from qrmed.replicate import learned_members
from qrmed.sim import gen_scenario, random_er_truth, true_effects

CHAIN = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=np.int8)


@pytest.fixture(scope="module")
def world():
    tr = random_er_truth(3, 3, 2)
    ds = gen_scenario(tr, "all_correct", 600, 5)
    return tr, ds, fit_bundle(ds)


@pytest.fixture(scope="module")
def single():
    tr = random_er_truth(1, 3, 8)
    ds = gen_scenario(tr, "all_correct", 800, 2)
    return ds, fit_bundle(ds)


# kappa ---------------------------------------------------------------------

def test_kappa_degenerate_cases(world):
    _, ds, nuis = world
    kap = nuis.mean(ca_spec()).predict(ds.c, 1.0)
    exact_y = Dataset(ds.c, ds.a, ds.m, np.where(ds.a == 1, kap, ds.y))
    s = score_kappa(exact_y, nuis, 1)
    assert np.allclose(s.values, kap, atol=1e-12)
    half = NuisanceBundle(PropensityModel("probit", np.zeros(ds.t)), nuis.mediators, dict(nuis.means), ds,
                          nuis.mean_fitter)
    s0 = score_kappa(ds, half, 1)
    assert np.array_equal(s0.values[ds.a == 0], s0.plugin[ds.a == 0])


# zeta ----------------------------------------------------------------------

@pytest.mark.parametrize("ap", [0, 1])
def test_zeta_p1_matches_aipw(single, ap):
    ds, nuis = single
    mu = nuis.mean(full_spec(1))
    b = mu.coefficients
    k = ds.c.shape[1]
    mu1 = np.column_stack([b[0] + ds.c @ b[1:1 + k] + b[1 + k], np.full(ds.n, b[-1])])
    law = nuis.mediators
    means = {0: law.mean(ds.c, 0.0)[:, 0], 1: law.mean(ds.c, 1.0)[:, 0], "obs": ds.m[:, 0]}
    phi, _ = aipw_zeta_p1(ds.y, ds.a, nuis.propensity.e1(ds.c), mu1, means, law.cov[0, 0], ap)
    ours = score_zeta(ds, nuis, 0, ap).values
    assert np.allclose(ours, phi, atol=1e-10, rtol=0)


def test_score_variance_matches_textbook_p1(single):
    ds, nuis = single
    phi = score_zeta(ds, nuis, 0, 1).values - score_zeta(ds, nuis, 0, 0).values
    est = qr_dm(ds, nuis, 0)
    textbook = np.var(phi) / ds.n
    assert abs(est.estimate.se ** 2 - textbook) < 1e-10
    assert abs(est.point - phi.mean()) < 1e-12


def test_zeta_indicator_block_vanishes_when_all_untreated(world):
    _, ds, nuis = world
    zeros = Dataset(ds.c, np.zeros(ds.n), ds.m, ds.y)
    s = score_zeta(zeros, nuis, 0, 0)
    ref = score_zeta(Dataset(ds.c, np.zeros(ds.n), ds.m, ds.y + 5.0), nuis, 0, 0)
    # Y only enters through the A=1 block
    assert np.allclose(s.values, ref.values, atol=1e-12)


# varrho --------------------------------------------------------------------

def test_varrho_empty_parents_weight(world):
    _, ds, nuis = world
    s = score_varrho(ds, nuis, 1, 1, ())
    law, e1 = nuis.mediators, nuis.propensity.e1(ds.c)
    sd = math.sqrt(law.cov[1, 1])
    f = {a: stats.norm.pdf(ds.m[:, 1], law.mean(ds.c, a)[:, 1], sd) for a in (0.0, 1.0)}
    v = ((1 - e1) * f[0.0] + e1 * f[1.0]) / f[1.0]
    # with no parents the regression is E[Y | C, A], so the plug-in and its conditional mean coincide
    mu = nuis.mean(parent_spec(1, ()))
    mu_obs = mu.predict(ds.c, 1.0, ds.m[:, [1]])
    ind = (ds.a == 1) / e1
    expected = mu_obs + ind * v * (ds.y - mu_obs)
    assert np.allclose(s.values, expected, atol=1e-10)


def test_evarrho_mc_matches_exact(world):
    _, ds, nuis = world
    exact = score_varrho(ds, nuis, 2, 1, (1,), McConfig(mode="exact"))
    mc = score_varrho(ds, nuis, 2, 1, (1,), McConfig(n=10_000, seed=3, mode="mc", batches=1))
    scale = float(np.std(ds.y))
    assert np.max(np.abs(mc.values - exact.values)[ds.a == 0]) < 5 * scale / 100
    assert abs(np.mean(mc.values - exact.values)) < 3 / math.sqrt(10_000)


# estimators ----------------------------------------------------------------

def test_identities_and_one_step(world):
    _, ds, nuis = world
    members = enumerate_mec(cpdag_of_dag(CHAIN))
    for mc in (McConfig(), McConfig(n=50, seed=1, mode="mc")):
        for j in range(3):
            eff = qr_effects(ds, nuis, j, members=members, mc=mc)
            for tm, im in zip(eff.tm.per_dag, eff.im.per_dag):
                assert abs(tm - (eff.dm.point + im)) < 1e-10
            assert abs(eff.im.point - np.mean(eff.im.per_dag)) < 1e-10
            for q in (eff.dm, eff.tm, eff.im):
                assert abs(np.mean(q.scores - q.point)) < 1e-10
                assert q.truncation_count == 0


def test_single_dag_matches_tm(world):
    _, ds, nuis = world
    g = np.zeros((3, 3), dtype=np.int8)
    g[0, 1] = g[2, 1] = 1
    cp = cpdag_of_dag(g)
    im = qr_im_avg(ds, nuis, cp, 1)
    tm = qr_tm(ds, nuis, 1, g)
    dm = qr_dm(ds, nuis, 1)
    assert im.per_dag == (pytest.approx(tm.point - dm.point, abs=1e-12),)


def test_truncation_counts(world):
    _, ds, nuis = world
    eff = qr_effects(ds, nuis, 0, members=[CHAIN], truncate=True)
    for q in (eff.dm, eff.tm, eff.im):
        assert 0 <= q.truncation_count <= ds.n
    plain = qr_effects(ds, nuis, 0, members=[CHAIN])
    if eff.dm.truncation_count == 0:
        assert eff.dm.point == plain.dm.point


def test_all_correct_direct_close_to_truth():
    tr = random_er_truth(3, 3, 4)
    ds = gen_scenario(tr, "all_correct", 1000, 9)
    dm = qr_dm(ds, fit_bundle(ds), tr.j)
    assert abs(dm.point - true_effects(tr, "all_correct").dm) <= 0.15


def test_zero_effect_null():
    tr = random_er_truth(3, 3, 6)
    d = {f: getattr(tr, f) for f in tr.__dataclass_fields__}
    d["beta_ma"] = np.zeros(3)
    null = type(tr)(**d)
    ds = gen_scenario(null, "all_correct", 2000, 4)
    nuis = fit_bundle(ds)
    eff = qr_effects(ds, nuis, null.j, members=learned_members(ds))
    for q in (eff.dm, eff.im):
        assert abs(q.point) < 4 * q.estimate.se + 1e-12


def test_fast_plugin_equals_ols_product(world):
    _, ds, nuis = world
    fits = fit_ols_models(ds)
    s = score_zeta(ds, nuis, 1, 1).plugin - score_zeta(ds, nuis, 1, 0).plugin
    assert np.allclose(s, fits.beta[1] * fits.theta[1], atol=1e-12)
    dm, im = fast_qr(ds, 1, members=[CHAIN], nuis=nuis)
    assert dm.estimate.method == "qr-fast" and dm.mc_n == 0


def test_fast_noiseless_outcome_direct_is_product(rng):
    n = 400
    c = rng.standard_normal((n, 1))
    a = (rng.random(n) < 0.5).astype(float)
    m = 0.5 * a[:, None] + rng.standard_normal((n, 2))
    y = 0.3 * c[:, 0] + a + m @ [1.0, -0.5]
    ds = Dataset(c, a, m, y)
    nuis = fit_bundle(ds)
    dm, _ = fast_qr(ds, 0, members=[np.zeros((2, 2), dtype=np.int8)], nuis=nuis)
    theta = nuis.mediators.theta_ma[0]
    # the outcome residual term is exactly zero; the tau terms average out in the Gaussian-linear fit
    assert abs(dm.point - theta) < 5 * dm.estimate.se


def test_mc_convergence_between_n_and_4n(world):
    _, ds, nuis = world
    small = ds.take(np.arange(300))
    nuis = fit_bundle(small)
    ok = 0
    for trial in range(50):
        lo = qr_dm(small, nuis, 0, McConfig(n=100, seed=trial, mode="mc"))
        hi = qr_dm(small, nuis, 0, McConfig(n=400, seed=10_000 + trial, mode="mc"))
        ok += abs(lo.point - hi.point) <= 2.5 * lo.mc_se
    assert ok >= 45


def test_mc_determinism_and_sampling_modes(world):
    _, ds, nuis = world
    small = ds.take(np.arange(200))
    nuis = fit_bundle(small)
    exact = qr_dm(small, nuis, 0).point
    for mode in ("direct", "importance", "literal"):
        cfg = McConfig(n=400, seed=5, mode="mc", sampling=mode)
        a, b = qr_dm(small, nuis, 0, cfg), qr_dm(small, nuis, 0, cfg)
        assert a.point == b.point
        assert abs(a.point - exact) < 6 * a.mc_se + 1e-3


def test_label_equivariance(world):
    _, ds, nuis = world
    perm = np.array([2, 0, 1])
    pds = Dataset(ds.c, ds.a, ds.m[:, perm], ds.y)
    pnuis = fit_bundle(pds)
    g = CHAIN
    pg = g[np.ix_(perm, perm)]
    for new_j, old_j in enumerate(perm):
        a = qr_effects(ds, nuis, int(old_j), members=[g])
        b = qr_effects(pds, pnuis, new_j, members=[pg])
        assert abs(a.dm.point - b.dm.point) < 1e-10 and abs(a.im.point - b.im.point) < 1e-10


def test_strategies_identity(world):
    _, ds, nuis = world
    members = enumerate_mec(cpdag_of_dag(CHAIN))
    for s in ("m0", "m1", "m2", "m3"):
        dm, tm, im = strategy_effects(ds, nuis, 1, s, members=members)
        assert abs(tm.point - (dm.point + im.point)) < 1e-10
        assert dm.se >= 0 and im.method == s
    with pytest.raises(ValueError):
        strategy_effects(ds, nuis, 1, "m9", members=members)


def test_index_validation(world):
    _, ds, nuis = world
    with pytest.raises(IndexError):
        qr_dm(ds, nuis, 7)


# variance and bootstrap ------------------------------------------------------

def test_score_variance_examples():
    assert score_variance(np.full(10, 3.0), 3.0) == 0.0
    z = np.random.default_rng(0).standard_normal(10_000)
    assert abs(score_variance(z, z.mean()) * 10_000 - 1) < 0.1
    st_ = ScoreTerms(np.ones(4), np.array([0.0, 10.0, 0.0, 0.0])).truncate(1.0)
    assert np.array_equal(st_.values, np.ones(4))


def _mean_estimator(d):
    return float(d.y.mean()), float(d.y.std() / math.sqrt(d.n))


def _toy(n, seed, mean=1.0):
    rng = np.random.default_rng(seed)
    return Dataset(np.zeros((n, 0)), np.arange(n) % 2, rng.standard_normal((n, 1)), mean + rng.standard_normal(n))


def test_bootstrap_degenerate_and_deterministic():
    ds = Dataset(np.zeros((30, 0)), np.arange(30) % 2, np.ones((30, 1)), np.full(30, 2.0))
    res = symmetric_t_bootstrap(_mean_estimator, ds, B=50, seed=1)
    assert res.ci_low == res.ci_high == 2.0
    toy = _toy(100, 3)
    assert symmetric_t_bootstrap(_mean_estimator, toy, 60, seed=9) == symmetric_t_bootstrap(_mean_estimator, toy, 60,
                                                                                           seed=9)
    with pytest.raises(ValueError):
        symmetric_t_bootstrap(_mean_estimator, toy, 20)


def test_bootstrap_failure_rate():
    calls = {"n": 0}

    def flaky(d):
        calls["n"] += 1
        if calls["n"] > 1 and calls["n"] % 3 == 0:
            raise RuntimeError("boom")
        return _mean_estimator(d)

    with pytest.raises(RuntimeError, match="bootstrap replicates failed"):
        symmetric_t_bootstrap(flaky, _toy(50, 1), B=60)


def test_bootstrap_many_matches_scalar():
    toy = _toy(80, 4)
    pair = bootstrap_many(lambda d: ([d.y.mean(), d.m.mean()], [d.y.std() / 9, d.m.std() / 9]), toy, 60, seed=2)
    one = symmetric_t_bootstrap(lambda d: (d.y.mean(), d.y.std() / 9), toy, 60, seed=2)
    assert pair[0] == one


def test_bootstrap_thread_invariance():
    toy = _toy(60, 5)
    a = symmetric_t_bootstrap(_mean_estimator, toy, 60, seed=3, n_jobs=1)
    b = symmetric_t_bootstrap(_mean_estimator, toy, 60, seed=3, n_jobs=2)
    assert a == b


@pytest.mark.slow
def test_bootstrap_coverage_gaussian_mean():
    hits = 0
    for r in range(200):
        res = symmetric_t_bootstrap(_mean_estimator, _toy(500, 100 + r), B=500, seed=r)
        hits += res.ci_low <= 1.0 <= res.ci_high
    assert 0.92 <= hits / 200 <= 0.98


@given(st.integers(0, 500))
def test_ci_contains_point(seed):
    res = symmetric_t_bootstrap(_mean_estimator, _toy(40, seed), 50, seed=seed)
    assert res.ci_low <= res.point <= res.ci_high
