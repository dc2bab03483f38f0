"""Efficient scores and quadruply robust estimators of DM_j, TM_j and IM_j.

Three functionals of the observed law carry all the estimands::

    kappa(a')   = E[ mu(C, a') ]
    zeta_j(a')  = E[ mu(C, 1, m_j, m_-j) ],  m_j ~ pi_{C,a'},  m_-j ~ pi_{C,0}
    varrho_j(a', G) = E[ mu(C, a', pa_j, m_j) ],  pa_j ~ pi_{C,a'},  m_j ~ pi_C

with ``DM_j = zeta(1) - zeta(0)`` and ``TM_j(G) = <kappa> - <varrho(G)>``.
Each estimator is a plug-in term plus the sample mean of a correction built
from the uncentered efficient influence function.

Inner integrals over mediator laws are evaluated either exactly (linear
means: plug in conditional means) or by Monte Carlo with ``N`` draws split
into independently seeded batches, which also yields a Monte-Carlo SE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .dataset import Dataset
from .effects_ols import EffectEstimate
from .graph import enumerate_mec, parents_of
from .nuisance import NuisanceBundle, ca_spec, fit_bundle, full_spec, parent_spec

STRATEGIES = ("m0", "m1", "m2", "m3")
SE_FLOOR = 1e-12

# integral codes used to derive independent random streams
_ZETA, _TAU1, _TAU2, _VARRHO, _TAU3, _EVARRHO = range(6)


@dataclass(frozen=True)
class McConfig:
    """Inner-integral settings.

    ``mode``: ``"auto"`` (exact when the mediator law is Gaussian and the mean
    models are linear), ``"exact"`` or ``"mc"``.  ``sampling`` picks the
    Monte-Carlo scheme for ``zeta``: ``"direct"`` draws each block from its
    own law, ``"importance"`` draws from ``pi_{C,1}`` with density-ratio
    weights and ``"literal"`` reproduces the mixed-draw ratio.
    """

    n: int = 100
    seed: int = 0
    mode: str = "auto"
    sampling: str = "direct"
    batches: int = 10
    chunk: int = 256

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Monte-Carlo size must be >= 1")
        if self.mode not in ("auto", "exact", "mc"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.sampling not in ("direct", "importance", "literal"):
            raise ValueError(f"unknown sampling {self.sampling!r}")


@dataclass(frozen=True)
class ScoreTerms:
    """Per-observation plug-in and correction parts of an uncentered efficient score."""

    plugin: np.ndarray
    correction: np.ndarray
    truncated: np.ndarray = None

    def __post_init__(self):
        if self.truncated is None:
            object.__setattr__(self, "truncated", np.zeros(self.plugin.shape, dtype=bool))

    @property
    def values(self) -> np.ndarray:
        return self.plugin + np.where(self.truncated, 0.0, self.correction)

    def truncate(self, threshold: float) -> "ScoreTerms":
        return ScoreTerms(self.plugin, self.correction, np.abs(self.correction) > threshold)

    def __sub__(self, other: "ScoreTerms") -> "ScoreTerms":
        return ScoreTerms(self.plugin - other.plugin, self.correction - other.correction,
                          self.truncated | other.truncated)


@dataclass(frozen=True)
class QrEstimate:
    estimate: EffectEstimate
    mc_n: int
    mc_se: float
    truncation_count: int
    bootstrap_reps: int = 0
    per_dag: tuple[float, ...] = ()
    scores: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def point(self) -> float:
        return self.estimate.point


def score_variance(scores, estimate: float) -> float:
    """``(1/n^2) sum_i (phi_i - estimate)^2``."""
    phi = scores.values if isinstance(scores, ScoreTerms) else np.asarray(scores, dtype=float)
    return float(np.sum((phi - estimate) ** 2) / phi.size ** 2)


def _is_exact(nuis: NuisanceBundle, mc: McConfig, specs) -> bool:
    if mc.mode == "exact":
        return True
    if mc.mode == "mc":
        return False
    return bool(getattr(nuis.mediators, "is_gaussian", False)) and all(
        getattr(nuis.mean(s), "is_linear", False) for s in specs)


def _batch_sizes(n: int, k: int) -> np.ndarray:
    k = min(k, n)
    return np.array([n // k + (b < n % k) for b in range(k)])


class _Integrals:
    """Inner integrals for one mediator ``j``; each method returns ``(K, n)`` batch values."""

    def __init__(self, ds: Dataset, nuis: NuisanceBundle, j: int, mc: McConfig, exact: bool):
        self.ds, self.nuis, self.j, self.mc, self.exact = ds, nuis, j, mc, exact
        self.law = nuis.mediators
        self.p = ds.p
        self.others = [k for k in range(ds.p) if k != j]
        self.e = nuis.propensity.probs(ds.c)
        self.sizes = np.array([1]) if exact else _batch_sizes(mc.n, mc.batches)
        self.weights = self.sizes / self.sizes.sum()
        self._means = {}

    # helpers -----------------------------------------------------------
    def law_mean(self, a: float) -> np.ndarray:
        if a not in self._means:
            self._means[a] = self.law.mean(self.ds.c, a)
        return self._means[a]

    def pooled(self, batched: np.ndarray) -> np.ndarray:
        return self.weights @ batched

    def _run(self, key: tuple[int, ...], fn: Callable) -> np.ndarray:
        """Evaluate ``fn(rows, rng, count)`` per batch and observation chunk."""
        n = self.ds.n
        out = np.empty((self.sizes.size, n))
        for b, count in enumerate(self.sizes):
            rng = np.random.default_rng(np.random.SeedSequence(self.mc.seed, spawn_key=(*key, b)))
            for start in range(0, n, self.mc.chunk):
                rows = slice(start, min(start + self.mc.chunk, n))
                out[b, rows] = fn(rows, rng, int(count))
        return out

    def _assemble(self, base: np.ndarray, cols: list[int], draws: np.ndarray) -> np.ndarray:
        """Broadcast ``base`` (rows, p) to (rows, K, p) and overwrite ``cols`` with ``draws``."""
        m = np.repeat(base[:, None, :], draws.shape[1], axis=1)
        m[..., cols] = draws
        return m

    # zeta family -------------------------------------------------------
    def zeta(self, ap: int) -> np.ndarray:
        mu = self.nuis.mean(full_spec(self.p))
        j, o = self.j, self.others
        if self.exact:
            m = self.law_mean(0.0).copy()
            m[:, j] = self.law_mean(float(ap))[:, j]
            return mu.predict(self.ds.c, 1.0, m)[None, :]
        c, law, mode = self.ds.c, self.law, self.mc.sampling

        def fn(rows, rng, count):
            cr = c[rows]
            if mode == "direct":
                mj = law.sample([j], cr, float(ap), count, rng)
                m = np.empty(mj.shape[:2] + (self.p,))
                m[..., [j]] = mj
                if o:
                    m[..., o] = law.sample(o, cr, 0.0, count, rng)
                return mu.predict(cr, 1.0, m).mean(axis=1)
            if mode == "importance":
                m = law.sample(list(range(self.p)), cr, 1.0, count, rng)
                ref = m
            else:
                m = law.sample(list(range(self.p)), cr, 0.0, count, rng)
                ref = law.sample(list(range(self.p)), cr, 1.0, count, rng)
            logw = law.logpdf([j], m[..., [j]], cr, float(ap)) - law.logpdf(list(range(self.p)), ref, cr, 1.0)
            if o:
                logw = logw + law.logpdf(o, m[..., o], cr, 0.0)
            return (mu.predict(cr, 1.0, m) * np.exp(logw)).mean(axis=1)

        return self._run((_ZETA, ap, j), fn)

    def tau1(self, ap: int) -> np.ndarray:
        """``int mu(C, 1, m_j, M_-j) pi_{C,a'}(m_j) dm_j``."""
        mu = self.nuis.mean(full_spec(self.p))
        j = self.j
        if self.exact:
            m = self.ds.m.copy()
            m[:, j] = self.law_mean(float(ap))[:, j]
            return mu.predict(self.ds.c, 1.0, m)[None, :]
        c, mm, law = self.ds.c, self.ds.m, self.law

        def fn(rows, rng, count):
            draws = law.sample([j], c[rows], float(ap), count, rng)
            return mu.predict(c[rows], 1.0, self._assemble(mm[rows], [j], draws)).mean(axis=1)

        return self._run((_TAU1, ap, j), fn)

    def tau2(self) -> np.ndarray:
        """``int mu(C, 1, M_j, m_-j) pi_{C,0}(m_-j) dm_-j``."""
        mu = self.nuis.mean(full_spec(self.p))
        j, o = self.j, self.others
        if self.exact or not o:
            m = self.ds.m.copy()
            if o:
                m[:, o] = self.law_mean(0.0)[:, o]
            vals = mu.predict(self.ds.c, 1.0, m)[None, :]
            return np.repeat(vals, self.sizes.size, axis=0)
        c, mm, law = self.ds.c, self.ds.m, self.law

        def fn(rows, rng, count):
            draws = law.sample(o, c[rows], 0.0, count, rng)
            return mu.predict(c[rows], 1.0, self._assemble(mm[rows], o, draws)).mean(axis=1)

        return self._run((_TAU2, j), fn)

    # varrho family -----------------------------------------------------
    def _mj_bar(self) -> np.ndarray:
        j = self.j
        return self.e[:, 0] * self.law_mean(0.0)[:, j] + self.e[:, 1] * self.law_mean(1.0)[:, j]

    def varrho(self, ap: int, pa: tuple[int, ...]) -> np.ndarray:
        """``int mu(C, a', pa, M_j) pi_{C,a'}(pa) dpa`` at the observed ``M_j``."""
        mu = self.nuis.mean(parent_spec(self.j, pa))
        j, pa_l = self.j, list(pa)
        ms = self.ds.m[:, [j, *pa_l]].copy()
        if self.exact or not pa_l:
            if pa_l:
                ms[:, 1:] = self.law_mean(float(ap))[:, pa_l]
            vals = mu.predict(self.ds.c, float(ap), ms)[None, :]
            return np.repeat(vals, self.sizes.size, axis=0)
        c, law = self.ds.c, self.law

        def fn(rows, rng, count):
            draws = law.sample(pa_l, c[rows], float(ap), count, rng)
            return mu.predict(c[rows], float(ap), self._assemble(ms[rows], list(range(1, 1 + len(pa_l))), draws)).mean(axis=1)

        return self._run((_VARRHO, ap, j, len(pa_l), *pa_l), fn)

    def tau3(self, ap: int, pa: tuple[int, ...]) -> np.ndarray:
        """``int mu(C, a', Pa, m_j) pi_C(m_j) dm_j`` at the observed parents."""
        mu = self.nuis.mean(parent_spec(self.j, pa))
        j, pa_l = self.j, list(pa)
        ms = self.ds.m[:, [j, *pa_l]].copy()
        if self.exact:
            ms[:, 0] = self._mj_bar()
            return mu.predict(self.ds.c, float(ap), ms)[None, :]
        c, law, e = self.ds.c, self.law, self.e

        def fn(rows, rng, count):
            total = 0.0
            for b in (0, 1):
                draws = law.sample([j], c[rows], float(b), count, rng)
                total = total + e[rows, b] * mu.predict(c[rows], float(ap), self._assemble(ms[rows], [0], draws)).mean(axis=1)
            return total

        return self._run((_TAU3, ap, j, len(pa_l), *pa_l), fn)

    def evarrho(self, ap: int, pa: tuple[int, ...]) -> np.ndarray:
        """``E[varrho | C]``: double integral over independent ``pa`` and ``m_j ~ pi_C``."""
        mu = self.nuis.mean(parent_spec(self.j, pa))
        j, pa_l = self.j, list(pa)
        k = 1 + len(pa_l)
        if self.exact:
            ms = np.empty((self.ds.n, k))
            ms[:, 0] = self._mj_bar()
            if pa_l:
                ms[:, 1:] = self.law_mean(float(ap))[:, pa_l]
            return mu.predict(self.ds.c, float(ap), ms)[None, :]
        c, law, e = self.ds.c, self.law, self.e
        linear = getattr(mu, "is_linear", False)

        def fn(rows, rng, count):
            cr = c[rows]
            nr = cr.shape[0]
            pa_draws = law.sample(pa_l, cr, float(ap), count, rng) if pa_l else np.zeros((nr, count, 0))
            total = 0.0
            for b in (0, 1):
                mj = law.sample([j], cr, float(b), count, rng)
                if linear:
                    # the N x N pair average of a linear function is the function at the means
                    ms = np.concatenate([mj.mean(axis=1), pa_draws.mean(axis=1)], axis=1)
                    val = mu.predict(cr, float(ap), ms)
                else:
                    pairs = np.empty((nr, count, count, k))
                    pairs[..., 0] = mj[:, :, None, 0]
                    pairs[..., 1:] = pa_draws[:, None, :, :]
                    val = mu.predict(cr, float(ap), pairs.reshape(nr, count * count, k)).mean(axis=1)
                total = total + e[rows, b] * val
            return total

        return self._run((_EVARRHO, ap, j, len(pa_l), *pa_l), fn)

    # density-ratio weights --------------------------------------------
    def w_zeta(self, ap: int) -> np.ndarray:
        """``pi_{C,a'}(M_j) pi_{C,0}(M_-j) / pi_{C,1}(M)``."""
        law, c, m, j, o = self.law, self.ds.c, self.ds.m, self.j, self.others
        logw = law.logpdf([j], m[:, [j]], c, float(ap)) - law.logpdf(list(range(self.p)), m, c, 1.0)
        if o:
            logw = logw + law.logpdf(o, m[:, o], c, 0.0)
        return _safe_exp(logw)

    def v_varrho(self, ap: int, pa: tuple[int, ...]) -> np.ndarray:
        """``pi_C(M_j) pi_{C,a'}(Pa) / pi_{C,a'}(Pa, M_j)``."""
        law, c, m, j, pa_l = self.law, self.ds.c, self.ds.m, self.j, list(pa)
        l0 = law.logpdf([j], m[:, [j]], c, 0.0)
        l1 = law.logpdf([j], m[:, [j]], c, 1.0)
        log_mix = np.logaddexp(np.log(self.e[:, 0]) + l0, np.log(self.e[:, 1]) + l1)
        log_joint = law.logpdf([j, *pa_l], m[:, [j, *pa_l]], c, float(ap))
        log_pa = law.logpdf(pa_l, m[:, pa_l], c, float(ap)) if pa_l else 0.0
        return _safe_exp(log_mix + log_pa - log_joint)


def _safe_exp(logw: np.ndarray) -> np.ndarray:
    if np.any(logw > 700):
        raise FloatingPointError("density ratio overflow (positivity violation)")
    return np.exp(logw)


class _Scores:
    """Batched efficient-score terms for one mediator."""

    def __init__(self, ds: Dataset, nuis: NuisanceBundle, j: int, mc: McConfig):
        if not 0 <= j < ds.p:
            raise IndexError(f"mediator index {j} out of range for p={ds.p}")
        self.ds, self.nuis, self.j = ds, nuis, j
        self.mc = mc
        exact = _is_exact(nuis, mc, [full_spec(ds.p), ca_spec()])
        self.ig = _Integrals(ds, nuis, j, mc, exact)
        e = self.ig.e
        self.ind = {0: (ds.a == 0) / e[:, 0], 1: (ds.a == 1) / e[:, 1]}
        self._cache = {}

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # integral values (batched) and weights
    def zeta(self, ap):
        return self._memo(("zeta", ap), lambda: self.ig.zeta(ap))

    def tau1(self, ap):
        return self._memo(("tau1", ap), lambda: self.ig.tau1(ap))

    def tau2(self):
        return self._memo(("tau2",), self.ig.tau2)

    def varrho(self, ap, pa):
        return self._memo(("varrho", ap, pa), lambda: self.ig.varrho(ap, pa))

    def tau3(self, ap, pa):
        return self._memo(("tau3", ap, pa), lambda: self.ig.tau3(ap, pa))

    def evarrho(self, ap, pa):
        return self._memo(("evarrho", ap, pa), lambda: self.ig.evarrho(ap, pa))

    def w(self, ap):
        return self._memo(("w", ap), lambda: self.ig.w_zeta(ap))

    def v(self, ap, pa):
        return self._memo(("v", ap, pa), lambda: self.ig.v_varrho(ap, pa))

    def mu_ca(self, ap):
        return self._memo(("muca", ap), lambda: self.nuis.mean(ca_spec()).predict(self.ds.c, float(ap)))

    def mu_full_obs(self):
        return self._memo(("mufull",), lambda: self.nuis.mean(full_spec(self.ds.p)).predict(self.ds.c, 1.0, self.ds.m))

    def mu_pa_obs(self, ap, pa):
        def fn():
            ms = self.ds.m[:, [self.j, *pa]]
            return self.nuis.mean(parent_spec(self.j, pa)).predict(self.ds.c, float(ap), ms)
        return self._memo(("mupa", ap, pa), fn)

    # uncentered scores: (plugin, correction) with a leading batch axis
    def kappa(self, ap):
        mu = self.mu_ca(ap)
        return mu[None, :], (self.ind[ap] * (self.ds.y - mu))[None, :]

    def zeta_score(self, ap):
        z = self.zeta(ap)
        corr = (self.ind[1] * self.w(ap) * (self.ds.y - self.mu_full_obs()))[None, :] \
            + self.ind[0] * (self.tau1(ap) - z) + self.ind[ap] * (self.tau2() - z)
        return z, corr

    def varrho_score(self, ap, pa):
        rho = self.varrho(ap, pa)
        corr = (self.ind[ap] * self.v(ap, pa) * (self.ds.y - self.mu_pa_obs(ap, pa)))[None, :] \
            + self.ind[ap] * (self.tau3(ap, pa) - self.evarrho(ap, pa))
        return rho, corr

    def dm(self):
        p1, c1 = self.zeta_score(1)
        p0, c0 = self.zeta_score(0)
        return p1 - p0, c1 - c0

    def tm(self, pa):
        k1p, k1c = self.kappa(1)
        k0p, k0c = self.kappa(0)
        r1p, r1c = self.varrho_score(1, pa)
        r0p, r0c = self.varrho_score(0, pa)
        return (k1p - k0p) - (r1p - r0p), (k1c - k0c) - (r1c - r0c)


def _pool(scores: _Scores, batched: np.ndarray) -> np.ndarray:
    batched = np.broadcast_to(batched, (scores.ig.sizes.size, scores.ds.n))
    return scores.ig.pooled(batched)


def _terms(scores: _Scores, pair) -> tuple[ScoreTerms, np.ndarray, np.ndarray]:
    """Pooled ScoreTerms plus batch-level plug-in and correction arrays."""
    k = scores.ig.sizes.size
    plug = np.broadcast_to(pair[0], (k, scores.ds.n))
    corr = np.broadcast_to(pair[1], (k, scores.ds.n))
    return ScoreTerms(scores.ig.pooled(plug), scores.ig.pooled(corr)), plug, corr


def _parents(dag_or_parents, j: int) -> tuple[int, ...]:
    if isinstance(dag_or_parents, np.ndarray) and dag_or_parents.ndim == 2:
        return parents_of(dag_or_parents, j)
    return tuple(sorted(int(k) for k in dag_or_parents))


def score_kappa(ds: Dataset, nuis: NuisanceBundle, ap: int) -> ScoreTerms:
    """Uncentered ``1(A=a')/e (Y - mu(C,a')) + mu(C,a')`` per observation."""
    mu = nuis.mean(ca_spec()).predict(ds.c, float(ap))
    e = nuis.propensity.probs(ds.c)[:, ap]
    return ScoreTerms(mu, (ds.a == ap) / e * (ds.y - mu))


def score_zeta(ds: Dataset, nuis: NuisanceBundle, j: int, ap: int, mc: McConfig | None = None) -> ScoreTerms:
    s = _Scores(ds, nuis, j, mc or McConfig())
    return _terms(s, s.zeta_score(ap))[0]


def score_varrho(ds: Dataset, nuis: NuisanceBundle, j: int, ap: int, dag_or_parents,
                 mc: McConfig | None = None) -> ScoreTerms:
    s = _Scores(ds, nuis, j, mc or McConfig())
    return _terms(s, s.varrho_score(ap, _parents(dag_or_parents, j)))[0]


def _members(cpdag_m=None, members=None) -> list[np.ndarray]:
    if members is not None:
        return list(members)
    if cpdag_m is None:
        raise ValueError("either cpdag_m or members is required")
    return enumerate_mec(cpdag_m)


def _finish(estimand, j, terms: ScoreTerms, plug_b, corr_b, threshold, alpha, method, mc_n,
            per_dag=()) -> QrEstimate:
    if threshold is not None:
        terms = terms.truncate(threshold)
    phi = terms.values
    est = float(np.mean(phi))
    se = math.sqrt(score_variance(phi, est))
    mask = terms.truncated
    batch_est = np.mean(plug_b + np.where(mask, 0.0, corr_b), axis=1)
    mc_se = float(np.std(batch_est, ddof=1) / math.sqrt(batch_est.size)) if batch_est.size > 1 else 0.0
    return QrEstimate(EffectEstimate.analytic(estimand, j, est, se, alpha, method), mc_n, mc_se,
                      int(mask.sum()), 0, tuple(per_dag), phi)


@dataclass(frozen=True)
class QrEffects:
    dm: QrEstimate
    tm: QrEstimate
    im: QrEstimate
    mec_size: int


def qr_effects(ds: Dataset, nuis: NuisanceBundle, j: int, cpdag_m=None, mc: McConfig | None = None,
               truncate: bool = False, alpha: float = 0.05, members=None,
               method: str = "qr") -> QrEffects:
    """``DM_j`` together with MEC-averaged ``TM_j`` and ``IM_j``."""
    mc = mc or McConfig()
    members = _members(cpdag_m, members)
    s = _Scores(ds, nuis, j, mc)
    mc_n = 0 if s.ig.exact else mc.n
    threshold = math.log(ds.n) if truncate else None
    dm_terms, dm_p, dm_c = _terms(s, s.dm())
    if threshold is not None:
        dm_terms = dm_terms.truncate(threshold)
    dm_mask = dm_terms.truncated

    per_parent = {}
    tm_vals, tm_phi = [], np.zeros(ds.n)
    tm_pb = np.zeros_like(dm_p)
    tm_cb = np.zeros_like(dm_c)
    tm_mask = np.zeros(ds.n, dtype=bool)
    for g in members:
        pa = parents_of(g, j)
        if pa not in per_parent:
            terms, pb, cb = _terms(s, s.tm(pa))
            if threshold is not None:
                terms = terms.truncate(threshold)
            per_parent[pa] = (terms, pb, np.where(terms.truncated, 0.0, cb))
        terms, pb, cb = per_parent[pa]
        tm_vals.append(float(np.mean(terms.values)))
        tm_phi += terms.values
        tm_pb = tm_pb + pb
        tm_cb = tm_cb + cb
        tm_mask |= terms.truncated
    k = len(members)
    tm_phi /= k
    tm_pb, tm_cb = tm_pb / k, tm_cb / k
    dm_phi = dm_terms.values
    dm_cb = np.where(dm_mask, 0.0, dm_c)

    dm = _finish("DM", j, dm_terms, dm_p, dm_c, None, alpha, method, mc_n)
    tm = _finish("TM", j, ScoreTerms(tm_phi, np.zeros(ds.n)), tm_pb, tm_cb, None, alpha, method, mc_n, tm_vals)
    tm = QrEstimate(tm.estimate, mc_n, tm.mc_se, int(tm_mask.sum()), 0, tuple(tm_vals), tm_phi)
    im_phi = tm_phi - dm_phi
    im_est = float(np.mean(im_phi))
    im_se = math.sqrt(score_variance(im_phi, im_est))
    im_batch = np.mean((tm_pb + tm_cb) - (dm_p + dm_cb), axis=1)
    im_mc_se = float(np.std(im_batch, ddof=1) / math.sqrt(im_batch.size)) if im_batch.size > 1 else 0.0
    im = QrEstimate(EffectEstimate.analytic("IM", j, im_est, im_se, alpha, method), mc_n, im_mc_se,
                    int((tm_mask | dm_mask).sum()), 0, tuple(v - dm.point for v in tm_vals), im_phi)
    return QrEffects(dm, tm, im, k)


def qr_dm(ds: Dataset, nuis: NuisanceBundle, j: int, mc: McConfig | None = None,
          truncate: bool = False, alpha: float = 0.05) -> QrEstimate:
    mc = mc or McConfig()
    s = _Scores(ds, nuis, j, mc)
    terms, plug_b, corr_b = _terms(s, s.dm())
    threshold = math.log(ds.n) if truncate else None
    return _finish("DM", j, terms, plug_b, corr_b, threshold, alpha, "qr", 0 if s.ig.exact else mc.n)


def qr_tm(ds: Dataset, nuis: NuisanceBundle, j: int, dag, mc: McConfig | None = None,
          truncate: bool = False, alpha: float = 0.05) -> QrEstimate:
    """``TM_j(G)`` for a single mediator DAG (or an explicit parent set)."""
    mc = mc or McConfig()
    s = _Scores(ds, nuis, j, mc)
    terms, plug_b, corr_b = _terms(s, s.tm(_parents(dag, j)))
    threshold = math.log(ds.n) if truncate else None
    out = _finish("TM", j, terms, plug_b, corr_b, threshold, alpha, "qr", 0 if s.ig.exact else mc.n)
    return QrEstimate(out.estimate, out.mc_n, out.mc_se, out.truncation_count, 0, (out.point,), out.scores)


def qr_im_avg(ds: Dataset, nuis: NuisanceBundle, cpdag_m, j: int, mc: McConfig | None = None,
              truncate: bool = False, alpha: float = 0.05, members=None) -> QrEstimate:
    return qr_effects(ds, nuis, j, cpdag_m, mc, truncate, alpha, members).im


def fast_qr(ds: Dataset, j: int, cpdag_m=None, alpha: float = 0.05, link: str = "probit",
            members=None, nuis: NuisanceBundle | None = None) -> tuple[QrEstimate, QrEstimate]:
    """Closed-form QR estimates under Gaussian-linear nuisance fits (no Monte Carlo)."""
    nuis = nuis or fit_bundle(ds, link=link)
    eff = qr_effects(ds, nuis, j, cpdag_m, McConfig(mode="exact"), False, alpha, members, "qr-fast")
    return eff.dm, eff.im


# alternative strategies ------------------------------------------------------

def _strategy_terms(s: _Scores, strategy: str, pa: tuple[int, ...] | None):
    """Per-observation DM terms (``pa is None``) or TM(G) terms for one strategy."""
    y = s.ds.y
    pool = lambda b: _pool(s, b)  # noqa: E731
    if pa is None:
        if strategy == "m0":
            return pool(s.zeta(1) - s.zeta(0))
        if strategy == "m1":
            return s.ind[1] * (s.w(1) - s.w(0)) * y
        if strategy == "m2":
            return s.ind[0] * pool(s.tau1(1) - s.tau1(0))
        return (s.ind[1] - s.ind[0]) * pool(s.tau2())
    if strategy == "m0":
        return s.mu_ca(1) - s.mu_ca(0) - pool(s.varrho(1, pa) - s.varrho(0, pa))
    kappa = (s.ind[1] - s.ind[0]) * y
    if strategy == "m1":
        return kappa - (s.ind[1] * s.v(1, pa) - s.ind[0] * s.v(0, pa)) * y
    if strategy == "m2":
        return kappa - (s.ind[1] * pool(s.tau3(1, pa)) - s.ind[0] * pool(s.tau3(0, pa)))
    return kappa - pool(s.evarrho(1, pa) - s.evarrho(0, pa))


def _mean_se(vals: np.ndarray) -> tuple[float, float]:
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(vals.size))


def strategy_effects(ds: Dataset, nuis: NuisanceBundle, j: int, strategy: str, cpdag_m=None,
                     mc: McConfig | None = None, alpha: float = 0.05, members=None):
    """``(DM, TM, IM)`` estimates of one single-model strategy ``m0 .. m3``."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    members = _members(cpdag_m, members)
    s = _Scores(ds, nuis, j, mc or McConfig())
    dm_i = _strategy_terms(s, strategy, None)
    per_parent = {}
    tm_i = np.zeros(ds.n)
    for g in members:
        pa = parents_of(g, j)
        if pa not in per_parent:
            per_parent[pa] = _strategy_terms(s, strategy, pa)
        tm_i += per_parent[pa]
    tm_i /= len(members)
    out = []
    for name, vals in (("DM", dm_i), ("TM", tm_i), ("IM", tm_i - dm_i)):
        point, se = _mean_se(vals)
        out.append(EffectEstimate.analytic(name, j, point, se, alpha, strategy))
    return tuple(out)


# bootstrap -------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    ci_low: float
    ci_high: float
    quantile: float
    point: float
    se: float
    replicates: int
    failures: int


def _replicate(estimator, ds: Dataset, seed: int, b: int, point: np.ndarray):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
    rows = rng.integers(0, ds.n, ds.n)
    try:
        with threadpool_limits(1):
            est, se = (np.atleast_1d(np.asarray(v, dtype=float)) for v in estimator(ds.take(rows)))
    except Exception:  # noqa: BLE001 - any replicate failure is counted, not raised
        return None
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(se))):
        return None
    return np.abs(est - point) / np.maximum(se, SE_FLOOR)


def _replicate_block(estimator, ds: Dataset, seed: int, block: np.ndarray, point: np.ndarray):
    return [_replicate(estimator, ds, seed, int(b), point) for b in block]


def bootstrap_many(estimator: Callable[[Dataset], tuple], ds: Dataset, B: int = 500, alpha: float = 0.05,
                   seed: int = 0, n_jobs: int = 1) -> list[BootstrapResult]:
    """Symmetric studentized intervals for a vector of statistics sharing one set of resamples.

    ``estimator`` maps a dataset to ``(points, ses)`` of equal length.  A
    replicate fails as a whole if any component is non-finite or raises.
    """
    if B < 50:
        raise ValueError("at least 50 bootstrap replicates are required")
    point, se = (np.atleast_1d(np.asarray(v, dtype=float)) for v in estimator(ds))
    if n_jobs == 1:
        stats_ = [_replicate(estimator, ds, seed, b, point) for b in range(B)]
    else:
        blocks = np.array_split(np.arange(B), min(n_jobs, B))
        parts = Parallel(n_jobs=n_jobs)(delayed(_replicate_block)(estimator, ds, seed, blk, point) for blk in blocks)
        stats_ = [t for part in parts for t in part]
    ok = [t for t in stats_ if t is not None]
    failures = B - len(ok)
    if failures > 0.1 * B:
        raise RuntimeError(f"{failures} of {B} bootstrap replicates failed")
    q = np.quantile(np.vstack(ok), 1 - alpha, axis=0)
    return [BootstrapResult(float(pt - qk * sk), float(pt + qk * sk), float(qk), float(pt), float(sk), B, failures)
            for pt, sk, qk in zip(point, se, q)]


def symmetric_t_bootstrap(estimator: Callable[[Dataset], tuple[float, float]], ds: Dataset,
                          B: int = 500, alpha: float = 0.05, seed: int = 0,
                          n_jobs: int = 1) -> BootstrapResult:
    """Symmetric studentized bootstrap interval ``point +- q_{1-alpha} se``.

    ``estimator`` maps a dataset to ``(point, se)``.  Rows are resampled with
    replacement; replicate ``b`` uses the stream ``SeedSequence(seed, (b,))``
    so the result does not depend on ``n_jobs``.
    """
    return bootstrap_many(estimator, ds, B, alpha, seed, n_jobs)[0]
