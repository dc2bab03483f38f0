"""Simulation designs with known ground truth.

Structural model (mediator block ``B`` has ``B[i, k] != 0`` for ``M_i -> M_k``)::

    C ~ N(0, I),  A = 1{U <= F(beta_AC' C)}
    M = B_MC' C + beta_MA A + B' M + eps,  eps ~ N(0, diag(sigma2))
    Y = beta_YC' C + alpha_YA A + beta_YM' M + N(0, 1)

with reduced form ``M = Theta C + theta A + e``, ``Theta = (I - B')^{-1} B_MC'``,
``theta = (I - B')^{-1} beta_MA`` and ``Cov(e) = (I - B')^{-1} diag(sigma2) (I - B)^{-1}``.

Scenario tags modify one component each:

* ``all_correct``: as above with a probit exposure.
* ``m0``: logit exposure.
* ``m1``: ``Y = cbrt(s)^2 + N(0, 1)`` with ``s`` the linear outcome index.
* ``m2``: ``M_k = cbrt(Theta_k C + theta_k A)^2 + e_k`` for ``k != j``.
* ``m3``: ``M_j = Theta_j C + theta_j / 2 + e_j`` (no exposure effect on ``M_j``).
* ``continuous_all``: ``Y = beta_YC' Z + cbrt(alpha A + beta_YM' M)^2 + N(0, 1)`` and the
  observed confounders are Kang-Schafer transforms of the latent ``Z``.
* ``discrete_all``: ``M_k = 1{U <= expit(Theta_k C + theta_k A + L_k)}``, ``L = (I - B')^{-1} eps``,
  with exposure interactions ``A C`` and ``A M`` in the outcome.

True effects are computed from the observed-data functionals that identify
them: Gauss-Hermite quadrature over the confounders, closed-form Gaussian
moments for the inner mediator integrals (``E|X|^{2/3}`` through a confluent
hypergeometric function) and exact probability tables for binary mediators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import special

from .dataset import Dataset
from .graph import cpdag_of_dag, enumerate_mec, parents_of
from .linmodel import conditioning_operator
from .nuisance import (CallableMeanModel, GaussianMediatorLaw, NuisanceBundle, PropensityModel, ca_spec,
                       full_spec)

SCENARIOS = ("all_correct", "m0", "m1", "m2", "m3", "continuous_all", "discrete_all")
SINGLE_MEDIATOR_SCENARIOS = SCENARIOS[:5]
_NU = 2.0 / 3.0


def cbrt2(x):
    """Real power ``x^{2/3}`` read as ``cbrt(x)^2`` so negative inputs are allowed."""
    return np.cbrt(x) ** 2


def expected_cbrt2(mean, var):
    """``E[cbrt(X)^2]`` for ``X ~ N(mean, var)``."""
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    mean, sd = np.broadcast_arrays(mean, sd)
    out = np.array(np.abs(mean) ** _NU, dtype=float, ndmin=1)
    flat_mean, flat_sd = mean.reshape(-1), sd.reshape(-1)
    pos = flat_sd > 0
    if np.any(pos):
        s = flat_sd[pos]
        x = flat_mean[pos] ** 2 / (2 * s * s)
        const = 2 ** (_NU / 2) * special.gamma((1 + _NU) / 2) / math.sqrt(math.pi)
        out = out.reshape(-1)
        out[pos] = s ** _NU * const * special.hyp1f1(-_NU / 2, 0.5, -x)
    return out.reshape(mean.shape)


def _identity_expectation(mean, var):
    return np.asarray(mean, dtype=float) + 0.0 * np.asarray(var, dtype=float)


def kang_schafer(z: np.ndarray) -> np.ndarray:
    """Kang-Schafer covariate transforms, cycled over blocks of four columns."""
    z = np.asarray(z, dtype=float)
    d = z.shape[1]
    out = np.empty_like(z)
    for k in range(d):
        base = 4 * (k // 4)
        zz = [z[:, (base + r) % d] for r in range(4)]
        kind = k % 4
        if kind == 0:
            out[:, k] = np.exp(zz[0] / 2)
        elif kind == 1:
            out[:, k] = zz[1] / (1 + np.exp(zz[0])) + 10
        elif kind == 2:
            out[:, k] = (zz[0] * zz[2] / 25 + 0.6) ** 3
        else:
            out[:, k] = (zz[1] + zz[3] + 20) ** 2
    return out


def kang_schafer_inverse(c: np.ndarray) -> np.ndarray:
    """Inverse of :func:`kang_schafer` for at most two columns."""
    c = np.asarray(c, dtype=float)
    if c.shape[1] > 2:
        raise ValueError("the transform is only inverted for up to two confounders")
    z = np.empty_like(c)
    if c.shape[1] >= 1:
        z[:, 0] = 2 * np.log(c[:, 0])
    if c.shape[1] == 2:
        z[:, 1] = (c[:, 1] - 10) * (1 + np.exp(z[:, 0]))
    return z


@dataclass(frozen=True)
class SemiLinearTruth:
    p: int
    t: int
    b_mm: np.ndarray
    b_mc: np.ndarray
    beta_ma: np.ndarray
    beta_yc: np.ndarray
    alpha_ya: float
    beta_ym: np.ndarray
    beta_ac: np.ndarray
    sigma2: np.ndarray
    j: int = 0
    seed: int | None = None

    def __post_init__(self):
        for name in ("b_mm", "b_mc", "beta_ma", "beta_yc", "beta_ym", "beta_ac", "sigma2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        p, k = self.p, self.t - 1
        if self.b_mm.shape != (p, p) or self.b_mc.shape != (k, p):
            raise ValueError("coefficient shapes do not match (p, t)")
        for name, size in (("beta_ma", p), ("beta_ym", p), ("sigma2", p), ("beta_yc", k), ("beta_ac", k)):
            if getattr(self, name).shape != (size,):
                raise ValueError(f"{name} must have length {size}")
        if not 0 <= self.j < p:
            raise ValueError("j out of range")
        if np.any(self.sigma2 <= 0):
            raise ValueError("noise variances must be positive")
        from .graph import is_dag
        if not is_dag(self.b_mm != 0):
            raise ValueError("b_mm must encode a DAG")

    @cached_property
    def inv(self) -> np.ndarray:
        return np.linalg.inv(np.eye(self.p) - self.b_mm.T)

    @property
    def theta_mc(self) -> np.ndarray:
        return self.inv @ self.b_mc.T

    @property
    def theta_ma(self) -> np.ndarray:
        return self.inv @ self.beta_ma

    @property
    def cov_e(self) -> np.ndarray:
        s = self.inv @ np.diag(self.sigma2) @ self.inv.T
        return (s + s.T) / 2

    @property
    def mediator_dag(self) -> np.ndarray:
        return (self.b_mm != 0).astype(np.int8)

    def full_dag(self) -> np.ndarray:
        """DAG over ``(C, A, M, Y)`` implied by the nonzero coefficients."""
        k, p = self.t - 1, self.p
        d = k + p + 2
        a_idx, m0, y_idx = k, k + 1, k + p + 1
        g = np.zeros((d, d), dtype=np.int8)
        g[:k, a_idx] = self.beta_ac != 0
        g[:k, m0:m0 + p] = self.b_mc != 0
        g[a_idx, m0:m0 + p] = self.beta_ma != 0
        g[m0:m0 + p, m0:m0 + p] = self.mediator_dag
        g[:k, y_idx] = self.beta_yc != 0
        g[a_idx, y_idx] = self.alpha_ya != 0
        g[m0:m0 + p, y_idx] = self.beta_ym != 0
        return g

    def mediator_cpdag(self) -> np.ndarray:
        """Mediator block of the CPDAG of the full structural DAG."""
        k = self.t - 1
        return cpdag_of_dag(self.full_dag())[k + 1:k + 1 + self.p, k + 1:k + 1 + self.p].copy()

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SemiLinearTruth":
        return cls(**d)


def random_er_truth(p: int, t: int, seed: int, heteroscedastic: bool = False,
                    j: int | None = None) -> SemiLinearTruth:
    """Random truth: ER mediator graph with expected degree ``floor(p/2)``, U(-1, 1) weights."""
    if p < 1 or t < 1:
        raise ValueError("need p >= 1 and t >= 1")
    rng = np.random.default_rng(seed)
    b = np.zeros((p, p))
    perm = rng.permutation(p)
    prob = (p // 2) / (p - 1) if p > 1 else 0.0
    for u, v in itertools.combinations(range(p), 2):
        if rng.random() < prob:
            b[perm[u], perm[v]] = rng.uniform(-1, 1)
    k = t - 1
    unif = lambda *shape: rng.uniform(-1, 1, shape)  # noqa: E731
    b_mc, beta_ma, beta_yc = unif(k, p), unif(p), unif(k)
    alpha, beta_ym, beta_ac = float(rng.uniform(-1, 1)), unif(p), unif(k)
    sigma2 = rng.uniform(0.5, 1.0, p) if heteroscedastic else np.ones(p)
    jj = int(rng.integers(p)) if j is None else int(j)
    return SemiLinearTruth(p, t, b, b_mc, beta_ma, beta_yc, alpha, beta_ym, beta_ac, sigma2, jj, seed)


def _exposure_prob(truth: SemiLinearTruth, z: np.ndarray, scenario: str) -> np.ndarray:
    eta = z @ truth.beta_ac
    return special.expit(eta) if scenario == "m0" else special.ndtr(eta)


def gen_scenario(truth: SemiLinearTruth, scenario: str, n: int, seed: int) -> Dataset:
    """Draw ``n`` observations of the named design."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    rng = np.random.default_rng(seed)
    p, k, j = truth.p, truth.t - 1, truth.j
    z = rng.standard_normal((n, k))
    a = (rng.random(n) <= _exposure_prob(truth, z, scenario)).astype(float)
    eps = rng.standard_normal((n, p)) * np.sqrt(truth.sigma2)
    e = eps @ truth.inv.T
    lin = z @ truth.theta_mc.T + a[:, None] * truth.theta_ma
    if scenario == "discrete_all":
        m = (rng.random((n, p)) <= special.expit(lin + e)).astype(float)
        y = (1 + a) * (z @ truth.beta_yc + m @ truth.beta_ym) + truth.alpha_ya * a + rng.standard_normal(n)
        return Dataset(z, a, m, y)
    m = lin + e
    if scenario == "m2":
        others = [i for i in range(p) if i != j]
        m[:, others] = cbrt2(lin[:, others]) + e[:, others]
    elif scenario == "m3":
        m[:, j] = z @ truth.theta_mc[j] + 0.5 * truth.theta_ma[j] + e[:, j]
    noise = rng.standard_normal(n)
    if scenario == "m1":
        y = cbrt2(z @ truth.beta_yc + truth.alpha_ya * a + m @ truth.beta_ym) + noise
    elif scenario == "continuous_all":
        y = z @ truth.beta_yc + cbrt2(truth.alpha_ya * a + m @ truth.beta_ym) + noise
        return Dataset(kang_schafer(z), a, m, y)
    else:
        y = z @ truth.beta_yc + truth.alpha_ya * a + m @ truth.beta_ym + noise
    return Dataset(z, a, m, y)


# ---------------------------------------------------------------------------
# Gaussian-mediator worlds: every inner integral is E h(N(mean, var))


class GaussianWorld:
    """True conditional laws of a Gaussian-mediator scenario as functions of latent ``z``.

    ``Y = u(z, a) + h(w(z, a) + beta' M) + noise`` and ``M | z, a ~ N(g(z, a), Sigma)``.
    """

    def __init__(self, truth: SemiLinearTruth, scenario: str, average_rough: bool = False):
        if scenario == "discrete_all" or scenario not in SCENARIOS:
            raise ValueError(f"{scenario!r} is not a Gaussian-mediator scenario")
        self.truth, self.scenario = truth, scenario
        # With a linear outcome every functional is affine in g with constant
        # coefficients, so the cusped cbrt^2 means may be replaced by their
        # exact averages over z without changing any expectation over z.
        self.average_rough = average_rough and scenario == "m2"
        self.cov = truth.cov_e
        self.beta = truth.beta_ym
        self.nonlinear_outcome = scenario in ("m1", "continuous_all")
        self.eh = expected_cbrt2 if self.nonlinear_outcome else _identity_expectation

    def e1(self, z):
        return _exposure_prob(self.truth, z, self.scenario)

    def g(self, z, a) -> np.ndarray:
        tr = self.truth
        a = np.broadcast_to(np.asarray(a, dtype=float), (z.shape[0],))
        lin = z @ tr.theta_mc.T + a[:, None] * tr.theta_ma
        if self.scenario == "m2":
            others = [i for i in range(tr.p) if i != tr.j]
            if self.average_rough:
                sd2 = np.sum(tr.theta_mc[others] ** 2, axis=1)
                lin[:, others] = expected_cbrt2(a[:, None] * tr.theta_ma[others], sd2)
            else:
                lin[:, others] = cbrt2(lin[:, others])
        elif self.scenario == "m3":
            lin[:, tr.j] = z @ tr.theta_mc[tr.j] + 0.5 * tr.theta_ma[tr.j]
        return lin

    def u(self, z, a):
        tr = self.truth
        if self.scenario == "m1":
            return np.zeros(z.shape[0])
        if self.scenario == "continuous_all":
            return z @ tr.beta_yc
        return z @ tr.beta_yc + tr.alpha_ya * a

    def w(self, z, a):
        tr = self.truth
        if self.scenario == "m1":
            return z @ tr.beta_yc + tr.alpha_ya * a
        if self.scenario == "continuous_all":
            return np.full(z.shape[0], tr.alpha_ya * float(a))
        return np.zeros(z.shape[0])

    # observed-data regressions -----------------------------------------
    def mu_full(self, z, a, m):
        """``E[Y | z, a, m]``; ``m`` is ``(n, p)`` or ``(n, K, p)``."""
        s = m @ self.beta
        shift = self.w(z, a)
        base = self.u(z, a)
        if s.ndim == 2:
            shift, base = shift[:, None], base[:, None]
        lin = shift + s
        return base + (cbrt2(lin) if self.nonlinear_outcome else lin)

    def kappa(self, z, a):
        mean = self.w(z, a) + self.g(z, a) @ self.beta
        return self.u(z, a) + self.eh(mean, self.beta @ self.cov @ self.beta)

    def zeta(self, z, ap):
        j = self.truth.j
        b = self.beta
        o = [k for k in range(self.truth.p) if k != j]
        g1, g0 = self.g(z, ap), self.g(z, 0.0)
        mean = self.w(z, 1.0) + b[j] * g1[:, j] + g0[:, o] @ b[o]
        var = b[j] ** 2 * self.cov[j, j] + b[o] @ self.cov[np.ix_(o, o)] @ b[o]
        return self.u(z, 1.0) + self.eh(mean, var)

    def _parent_regression(self, pa):
        """Linear index of ``beta' M`` given ``M_S``, ``S = (j, Pa)``: ``(gamma, K, S, R, var_r)``."""
        j = self.truth.j
        s_idx = [j, *pa]
        r_idx = [k for k in range(self.truth.p) if k not in s_idx]
        k_mat, s_r = conditioning_operator(self.cov, r_idx, s_idx)
        gamma = self.beta[s_idx] + k_mat.T @ self.beta[r_idx]
        var_r = float(self.beta[r_idx] @ s_r @ self.beta[r_idx]) if r_idx else 0.0
        return gamma, k_mat, s_idx, r_idx, var_r

    def mu_pa(self, z, ap, m_s, pa):
        """``E[Y | z, a', M_j, Pa]`` with ``m_s`` ordered ``(M_j, Pa)``."""
        gamma, k_mat, s_idx, r_idx, var_r = self._parent_regression(tuple(pa))
        g = self.g(z, ap)
        offset = self.w(z, ap) + (g[:, r_idx] @ self.beta[r_idx] if r_idx else 0.0) \
            - g[:, s_idx] @ (k_mat.T @ self.beta[r_idx] if r_idx else np.zeros(len(s_idx)))
        lin = m_s @ gamma
        base = self.u(z, ap)
        if lin.ndim == 2:
            offset, base = offset[:, None], base[:, None]
        return base + self.eh(offset + lin, var_r)

    def evarrho(self, z, ap, pa):
        gamma, k_mat, s_idx, r_idx, var_r = self._parent_regression(tuple(pa))
        j = self.truth.j
        pa = list(pa)
        g_ap = self.g(z, ap)
        offset = self.w(z, ap) + (g_ap[:, r_idx] @ self.beta[r_idx] if r_idx else 0.0) \
            - g_ap[:, s_idx] @ (k_mat.T @ self.beta[r_idx] if r_idx else np.zeros(len(s_idx)))
        var_pa = float(gamma[1:] @ self.cov[np.ix_(pa, pa)] @ gamma[1:]) if pa else 0.0
        mean_pa = g_ap[:, pa] @ gamma[1:] if pa else 0.0
        e1 = self.e1(z)
        total = 0.0
        for b, wt in ((0.0, 1 - e1), (1.0, e1)):
            mean = offset + gamma[0] * self.g(z, b)[:, j] + mean_pa
            total = total + wt * self.eh(mean, var_r + var_pa + gamma[0] ** 2 * self.cov[j, j])
        return self.u(z, ap) + total

    def cross_world(self, z):
        """``E[Y(1, M(0)) | z]`` for the natural direct effect."""
        mean = self.w(z, 1.0) + self.g(z, 0.0) @ self.beta
        return self.u(z, 1.0) + self.eh(mean, self.beta @ self.cov @ self.beta)


def _gh_grid(dim: int, order: int):
    x, w = hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return nodes, weights


@dataclass(frozen=True)
class TrueEffects:
    dm: float
    tm: float
    im: float
    de: float
    ie: float
    te: float
    per_dag_tm: tuple[float, ...] = ()
    error: float = 0.0
    mec_size: int = 1
    j: int = 0

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _gaussian_effects(world: GaussianWorld, j_members, order: int):
    tr = world.truth
    z, wts = _gh_grid(tr.t - 1, order)
    ex = lambda v: float(wts @ v)  # noqa: E731
    k1, k0 = ex(world.kappa(z, 1.0)), ex(world.kappa(z, 0.0))
    dm = ex(world.zeta(z, 1) - world.zeta(z, 0))
    cache = {}
    per_dag = []
    for g in j_members:
        pa = parents_of(g, tr.j)
        if pa not in cache:
            cache[pa] = (k1 - k0) - ex(world.evarrho(z, 1.0, pa) - world.evarrho(z, 0.0, pa))
        per_dag.append(cache[pa])
    de = ex(world.cross_world(z)) - k0
    return np.array([dm, float(np.mean(per_dag)), de, k1 - k0]), per_dag


# ---------------------------------------------------------------------------
# binary-mediator world: exact probability tables


class DiscreteWorld:
    """``P(M = m | C, A)`` tables for the binary-mediator design via quadrature over the latent noise."""

    def __init__(self, truth: SemiLinearTruth, latent_order: int = 16):
        self.truth = truth
        self.states = np.array(list(itertools.product((0.0, 1.0), repeat=truth.p)))
        chol = np.linalg.cholesky(truth.cov_e + 1e-14 * np.eye(truth.p))
        nodes, self.l_weights = _gh_grid(truth.p, latent_order)
        self.latent = nodes @ chol.T

    def e1(self, z):
        return special.ndtr(z @ self.truth.beta_ac)

    def pmf(self, z, a) -> np.ndarray:
        """``(n, 2^p)`` table over ``self.states``."""
        tr = self.truth
        eta = z @ tr.theta_mc.T + float(a) * tr.theta_ma
        out = np.empty((z.shape[0], self.states.shape[0]))
        for start in range(0, z.shape[0], 64):
            rows = slice(start, start + 64)
            prob = special.expit(eta[rows, None, :] + self.latent[None, :, :])
            lik = np.prod(np.where(self.states[:, None, None, :] == 1.0, prob[None], 1 - prob[None]), axis=-1)
            out[rows] = (lik @ self.l_weights).T
        return out

    def mu(self, z, a, m, shared: bool = False):
        """``E[Y | z, a, m]``; ``shared=True`` evaluates every row of ``m`` at every ``z``."""
        tr = self.truth
        a = float(a)
        s = m @ tr.beta_ym
        base = z @ tr.beta_yc
        if shared:
            base, s = base[:, None], s[None, :]
        return (1 + a) * (base + s) + tr.alpha_ya * a

    def marginal(self, table, idx):
        """Probability that ``M_idx = 1`` per row."""
        return table @ self.states[:, idx]

    def effects(self, z, wts, members):
        j = self.truth.j
        ex = lambda v: float(wts @ v)  # noqa: E731
        tab = {0: self.pmf(z, 0.0), 1: self.pmf(z, 1.0)}
        mu_states = {a: self.mu(z, a, self.states, shared=True) for a in (0, 1)}
        kappa = {a: np.sum(tab[a] * mu_states[a], axis=1) for a in (0, 1)}
        means = {a: tab[a] @ self.states for a in (0, 1)}

        def zeta(ap):
            m = means[0].copy()
            m[:, j] = means[ap][:, j]
            return self.mu(z, 1.0, m)

        dm = ex(zeta(1) - zeta(0))
        e1 = self.e1(z)
        pj = {0: 1 - e1, 1: e1}
        mix_j = pj[0] * means[0][:, j] + pj[1] * means[1][:, j]
        cache, per_dag = {}, []
        for g in members:
            pa = parents_of(g, j)
            if pa not in cache:
                cache[pa] = ex(kappa[1] - kappa[0]) - ex(self._evarrho(z, tab, 1, pa, mix_j) - self._evarrho(z, tab, 0, pa, mix_j))
            per_dag.append(cache[pa])
        cross = np.sum(tab[0] * mu_states[1], axis=1)
        k1, k0 = ex(kappa[1]), ex(kappa[0])
        return np.array([dm, float(np.mean(per_dag)), ex(cross) - k0, k1 - k0]), per_dag

    def _evarrho(self, z, tab, ap, pa, mix_j):
        """``E[varrho | C]``: ``sum_{m_j, pa} mu_pa(m_j, pa) pi_{a'}(pa) pi_C(m_j)``."""
        j, states = self.truth.j, self.states
        t = tab[ap]
        mu = self.mu(z, ap, states, shared=True)
        total = np.zeros(z.shape[0])
        pa = list(pa)
        for s_val in itertools.product((0.0, 1.0), repeat=1 + len(pa)):
            mask = np.all(states[:, [j, *pa]] == np.array(s_val), axis=1)
            joint = t[:, mask].sum(axis=1)
            cond_mean = np.where(joint > 0, (t[:, mask] * mu[:, mask]).sum(axis=1) / np.maximum(joint, 1e-300), 0.0)
            pa_mask = np.all(states[:, pa] == np.array(s_val[1:]), axis=1) if pa else np.ones(len(states), bool)
            p_pa = t[:, pa_mask].sum(axis=1)
            p_mj = mix_j if s_val[0] == 1.0 else 1 - mix_j
            total = total + cond_mean * p_pa * p_mj
        return total


def truth_members(truth: SemiLinearTruth) -> list[np.ndarray]:
    return enumerate_mec(truth.mediator_cpdag())


def true_effects(truth: SemiLinearTruth, scenario: str = "all_correct", j: int | None = None,
                 members: list[np.ndarray] | None = None, order: int = 40) -> TrueEffects:
    """True ``DM_j``, MEC-averaged ``TM_j`` / ``IM_j`` and the natural effects.

    ``error`` is the largest change of any reported value between quadrature
    orders ``order`` and ``order + 8``.
    """
    if j is not None and j != truth.j:
        truth = _with_j(truth, j)
    members = truth_members(truth) if members is None else members
    if scenario == "discrete_all":
        def run(q):
            world = DiscreteWorld(truth, latent_order=max(8, q // 2))
            z, w = _gh_grid(truth.t - 1, q)
            return world.effects(z, w, members)
    else:
        world = GaussianWorld(truth, scenario, average_rough=True)

        def run(q):
            return _gaussian_effects(world, members, q)
    lo_q = order if scenario != "discrete_all" else max(order // 2, 12)
    vals, per_dag = run(lo_q)
    vals2, _ = run(lo_q + 8)
    err = float(np.max(np.abs(vals2 - vals)))
    dm, tm, de, te = vals2
    return TrueEffects(float(dm), float(tm), float(tm - dm), float(de), float(te - de), float(te),
                       tuple(float(v) for v in per_dag), err, len(members), truth.j)


def _with_j(truth: SemiLinearTruth, j: int) -> SemiLinearTruth:
    d = {f: getattr(truth, f) for f in truth.__dataclass_fields__}
    d["j"] = int(j)
    return SemiLinearTruth(**d)


def prop3_effects(truth: SemiLinearTruth, j: int | None = None) -> dict:
    """Closed forms for the linear design under the true mediator DAG."""
    j = truth.j if j is None else j
    beta, theta = truth.beta_ym, truth.theta_ma
    o = [k for k in range(truth.p) if k != j]
    b_oo = truth.b_mm[np.ix_(o, o)]
    inner = np.linalg.solve(np.eye(len(o)) - b_oo.T, truth.beta_ma[o]) if o else np.zeros(0)
    tm = float(beta @ theta - beta[o] @ inner)
    dm = float(beta[j] * theta[j])
    ie = float(beta @ theta)
    return {"dm": dm, "tm": tm, "im": tm - dm, "de": truth.alpha_ya, "ie": ie, "te": truth.alpha_ya + ie}


# ---------------------------------------------------------------------------
# true nuisance models


class _ShiftedGaussianLaw(GaussianMediatorLaw):
    """Gaussian law with an arbitrary conditional-mean function."""

    def __init__(self, mean_fn, cov):
        p = cov.shape[0]
        super().__init__(np.zeros(p), np.zeros((p, 0)), np.zeros(p), cov)
        object.__setattr__(self, "_mean_fn", mean_fn)

    def mean(self, c, a):
        return self._mean_fn(np.asarray(c, dtype=float), a)


def oracle_bundle(truth: SemiLinearTruth, scenario: str = "all_correct") -> NuisanceBundle:
    """Nuisance bundle holding the true propensity, mediator law and outcome means."""
    if scenario not in SINGLE_MEDIATOR_SCENARIOS:
        raise ValueError("oracle nuisances are available for the single-mediator scenarios")
    world = GaussianWorld(truth, scenario)
    link = "logit" if scenario == "m0" else "probit"
    prop = PropensityModel(link, np.concatenate([[0.0], truth.beta_ac]), clip=1e-12)
    law = _ShiftedGaussianLaw(lambda c, a: world.g(c, a), world.cov)
    p, j = truth.p, truth.j

    def fitter(spec):
        if spec == full_spec(p):
            return CallableMeanModel(spec, lambda c, a, m: world.mu_full(c, a, m), is_linear=not world.nonlinear_outcome)
        if spec == ca_spec():
            return CallableMeanModel(spec, lambda c, a, m=None: world.kappa(c, a), is_linear=False)
        if spec.confounders and spec.exposure and spec.mediators and spec.mediators[0] == j:
            pa = spec.mediators[1:]
            return CallableMeanModel(spec, lambda c, a, m: world.mu_pa(c, a, m, pa),
                                     is_linear=not world.nonlinear_outcome)
        raise KeyError(f"no oracle mean for {spec}")

    return NuisanceBundle(prop, law, {}, None, fitter)
