"""OLS estimators of DE, IE, TE, DM_j, TM_j and IM_j under the semi-linear model.

Two regressions drive everything::

    M = Theta C + theta A + e_M          (mediator regression)
    Y = beta_C C + alpha A + beta M + e  (outcome regression)

so that ``DE = alpha``, ``IE = beta' theta``, ``DM_j = beta_j theta_j`` and
``TM_j(G) = theta_j * xi_j(G)`` where ``xi_j(G)`` is the coefficient of
``M_j`` when ``Y`` is regressed on ``(M_j, Pa_j(G), A, C)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .dataset import Dataset
from .graph import enumerate_mec, parents_of
from .linmodel import OlsFit, gamma_transform, ols_fit, with_intercept

ESTIMANDS = ("DE", "IE", "TE", "DM", "TM", "IM")


@dataclass(frozen=True)
class EffectEstimate:
    estimand: str
    mediator_index: int | None
    point: float
    se: float
    ci_low: float
    ci_high: float
    alpha: float
    method: str

    def __post_init__(self):
        if self.estimand not in ESTIMANDS:
            raise ValueError(f"unknown estimand {self.estimand!r}")

    @classmethod
    def analytic(cls, estimand: str, j: int | None, point: float, se: float, alpha: float,
                 method: str) -> "EffectEstimate":
        """Wald interval ``point +- z_{1-alpha/2} se``."""
        se = float(max(se, 0.0))
        half = stats.norm.ppf(1 - alpha / 2) * se
        return cls(estimand, j, float(point), se, float(point - half), float(point + half), alpha, method)

    def with_ci(self, low: float, high: float) -> "EffectEstimate":
        return EffectEstimate(self.estimand, self.mediator_index, self.point, self.se,
                              float(min(low, self.point)), float(max(high, self.point)), self.alpha, self.method)

    def as_row(self) -> dict:
        return {"estimand": self.estimand, "j": "" if self.mediator_index is None else self.mediator_index,
                "method": self.method, "point": self.point, "se": self.se,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "alpha": self.alpha}


@dataclass(frozen=True)
class OlsFits:
    """Mediator regression on ``(1, C, A)`` and outcome regression on ``(1, C, A, M)``."""

    mediator: OlsFit
    outcome: OlsFit
    short: OlsFit

    @property
    def theta(self) -> np.ndarray:
        """``theta_MA``: coefficient of ``A`` per mediator."""
        return np.atleast_2d(self.mediator.coefficients.T)[:, -1]

    @property
    def alpha(self) -> float:
        return float(self.outcome.coefficients[-self.p - 1])

    @property
    def beta(self) -> np.ndarray:
        return self.outcome.coefficients[-self.p:]

    @property
    def p(self) -> int:
        r = self.mediator.residuals
        return 1 if r.ndim == 1 else r.shape[1]


def fit_ols_models(ds: Dataset) -> OlsFits:
    med = ols_fit(with_intercept(ds.c, ds.a), ds.m)
    out = ols_fit(with_intercept(ds.c, ds.a, ds.m), ds.y)
    short = ols_fit(with_intercept(ds.c, ds.a), ds.y)
    return OlsFits(med, out, short)


def _others(p: int, j: int) -> list[int]:
    return [k for k in range(p) if k != j]


class _Projections:
    """Cached Gamma transforms and residual moments shared by the OLS estimators."""

    def __init__(self, ds: Dataset, fits: OlsFits):
        self.ds, self.fits, self.n = ds, fits, ds.n
        self.g_a_short = gamma_transform(ds.a, with_intercept(ds.c))[0]
        self.g_a_full = gamma_transform(ds.a, with_intercept(ds.c, ds.m))[0]
        self.g_m = gamma_transform(ds.m, with_intercept(ds.c, ds.a))
        self.eps = fits.outcome.residuals
        self.e_m = fits.mediator.residuals.reshape(self.n, ds.p)
        self.ss_eps = float(self.eps @ self.eps)

    def sigma_beta(self) -> np.ndarray:
        return self.ss_eps * (self.g_m @ self.g_m.T)

    def sigma_theta(self) -> np.ndarray:
        return (self.e_m.T @ self.e_m) * float(self.g_a_short @ self.g_a_short)


def ols_de_ie(ds: Dataset, fits: OlsFits | None = None, alpha: float = 0.05):
    """``(DE, IE, TE)`` with homoscedastic delta-method standard errors."""
    fits = fits or fit_ols_models(ds)
    pr = _Projections(ds, fits)
    n = ds.n
    de = fits.alpha
    se_de = np.sqrt(float(pr.g_a_full @ pr.g_a_full) * pr.ss_eps / n)
    beta, theta = fits.beta, fits.theta
    ie = float(beta @ theta)
    var_ie = (beta @ pr.sigma_theta() @ beta + theta @ pr.sigma_beta() @ theta) / n
    te = de + ie
    r = fits.short.residuals
    se_te = np.sqrt(float(pr.g_a_short @ pr.g_a_short) * float(r @ r) / n)
    return (EffectEstimate.analytic("DE", None, de, se_de, alpha, "ols"),
            EffectEstimate.analytic("IE", None, ie, np.sqrt(max(var_ie, 0.0)), alpha, "ols"),
            EffectEstimate.analytic("TE", None, te, se_te, alpha, "ols"))


def ols_dm(ds: Dataset, fits: OlsFits | None, j: int, alpha: float = 0.05) -> EffectEstimate:
    fits = fits or fit_ols_models(ds)
    pr = _Projections(ds, fits)
    b, th = fits.beta[j], fits.theta[j]
    var = (b ** 2 * pr.sigma_theta()[j, j] + th ** 2 * pr.sigma_beta()[j, j]) / ds.n
    return EffectEstimate.analytic("DM", j, b * th, np.sqrt(max(var, 0.0)), alpha, "ols")


def _parent_design(ds: Dataset, j: int, pa: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """``(x_j, Z)`` with ``Z = (1, Pa, A, C)``."""
    pa = sorted(int(k) for k in pa)
    if j in pa:
        raise ValueError("a node cannot be its own parent")
    return ds.m[:, j], with_intercept(ds.m[:, pa], ds.a, ds.c)


def reg_coef_first(ds: Dataset, j: int, pa: Sequence[int]) -> float:
    """Coefficient of ``M_j`` in the OLS of ``Y`` on ``(1, M_j, M_Pa, A, C)``."""
    x, z = _parent_design(ds, j, pa)
    return float(ols_fit(np.column_stack([x, z]), ds.y).coefficients[0])


def _influence_first(ds: Dataset, j: int, pa: Sequence[int]) -> tuple[float, np.ndarray]:
    """First coefficient and its per-observation influence values."""
    x, z = _parent_design(ds, j, pa)
    fit = ols_fit(np.column_stack([x, z]), ds.y)
    gamma = gamma_transform(x, z)[0]
    return float(fit.coefficients[0]), ds.n * gamma * fit.residuals


@dataclass(frozen=True)
class OlsMediatorEffects:
    dm: EffectEstimate
    tm: EffectEstimate
    im: EffectEstimate
    per_dag_tm: tuple[float, ...]
    per_dag_im: tuple[float, ...]
    mec_size: int


def ols_mediator_effects(ds: Dataset, j: int, cpdag_m=None, alpha: float = 0.05,
                         members: list[np.ndarray] | None = None,
                         fits: OlsFits | None = None) -> OlsMediatorEffects:
    """``DM_j``, MEC-averaged ``TM_j`` and ``IM_j`` with analytic influence-function SEs."""
    fits = fits or fit_ols_models(ds)
    if members is None:
        if cpdag_m is None:
            raise ValueError("either cpdag_m or members is required")
        members = enumerate_mec(cpdag_m)
    n, p = ds.n, ds.p
    dm = ols_dm(ds, fits, j, alpha)
    theta_j, beta_j = fits.theta[j], fits.beta[j]
    if_theta = n * gamma_transform(ds.a, with_intercept(ds.c))[0] * fits.mediator.residuals.reshape(n, p)[:, j]
    _, if_beta = _influence_first(ds, j, _others(p, j))
    cache: dict[tuple[int, ...], tuple[float, np.ndarray]] = {}
    tm_vals, im_vals = [], []
    if_tm = np.zeros(n)
    if_im = np.zeros(n)
    for g in members:
        pa = parents_of(g, j)
        if pa not in cache:
            cache[pa] = _influence_first(ds, j, pa)
        xi, if_xi = cache[pa]
        tm_vals.append(theta_j * xi)
        im_vals.append(theta_j * (xi - beta_j))
        if_tm += theta_j * if_xi + xi * if_theta
        if_im += theta_j * (if_xi - if_beta) + (xi - beta_j) * if_theta
    k = len(members)
    tm_point = float(np.mean(tm_vals))
    im_point = tm_point - dm.point
    se_tm = np.sqrt(np.sum((if_tm / k) ** 2)) / n
    se_im = np.sqrt(np.sum((if_im / k) ** 2)) / n
    return OlsMediatorEffects(
        dm,
        EffectEstimate.analytic("TM", j, tm_point, se_tm, alpha, "ols"),
        EffectEstimate.analytic("IM", j, im_point, se_im, alpha, "ols"),
        tuple(float(v) for v in tm_vals), tuple(float(v) for v in im_vals), k)


def ols_im_avg(ds: Dataset, cpdag_m, j: int, alpha: float = 0.05, ci_mode: str = "analytic",
               bootstrap_b: int = 500, seed: int = 0, n_jobs: int = 1) -> EffectEstimate:
    """MEC-averaged ``IM_j``; ``ci_mode="bootstrap"`` swaps in a symmetric-t interval."""
    members = enumerate_mec(cpdag_m)
    est = ols_mediator_effects(ds, j, members=members, alpha=alpha).im
    if ci_mode == "analytic":
        return est
    if ci_mode != "bootstrap":
        raise ValueError(f"unknown ci_mode {ci_mode!r}")
    from .effects_qr import symmetric_t_bootstrap

    def estimator(d: Dataset):
        e = ols_mediator_effects(d, j, members=members, alpha=alpha).im
        return e.point, e.se

    boot = symmetric_t_bootstrap(estimator, ds, bootstrap_b, alpha, seed, n_jobs=n_jobs)
    return est.with_ci(boot.ci_low, boot.ci_high)


def ols_all_effects(ds: Dataset, members: list[np.ndarray], alpha: float = 0.05,
                    mediators: Sequence[int] | None = None) -> list[EffectEstimate]:
    """Rows for DE, IE, TE and every requested mediator's DM, TM, IM."""
    fits = fit_ols_models(ds)
    rows = list(ols_de_ie(ds, fits, alpha))
    for j in (range(ds.p) if mediators is None else mediators):
        eff = ols_mediator_effects(ds, j, members=members, alpha=alpha, fits=fits)
        rows += [eff.dm, eff.tm, eff.im]
    return rows
