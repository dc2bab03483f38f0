"""Nuisance models: propensity score, mediator law and outcome regressions.

The defaults are a probit (or logit) propensity, a Gaussian-linear mediator
law ``M | C, A ~ N(b0 + Theta C + theta A, Sigma)`` and linear outcome means.
Any object exposing the same methods can be placed in a
:class:`NuisanceBundle`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special, stats

from .dataset import Dataset
from .linmodel import conditioning_operator, gaussian_logpdf, ols_fit, sample_gaussian, with_intercept

LINKS = ("probit", "logit")
DEFAULT_CLIP = 0.01
MISSPECIFICATIONS = ("wrong_link", "wrong_outcome", "wrong_mediator_j", "wrong_mediator_shift")


class NuisanceError(RuntimeError):
    """A nuisance model could not be fitted."""


def _cdf(link: str, eta: np.ndarray) -> np.ndarray:
    if link == "probit":
        return special.ndtr(eta)
    if link == "logit":
        return special.expit(eta)
    raise ValueError(f"unknown link {link!r}")


def _log_cdf_pair(link: str, eta: np.ndarray):
    """``(log F(eta), log(1 - F(eta)))`` computed stably."""
    if link == "probit":
        return special.log_ndtr(eta), special.log_ndtr(-eta)
    return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)


def fit_binary_glm(x: np.ndarray, y: np.ndarray, link: str, tol: float = 1e-8,
                   max_iter: int = 100) -> np.ndarray:
    """Maximum-likelihood binary GLM by Fisher scoring with step halving."""
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}")
    beta = np.zeros(x.shape[1])

    def loglik(b):
        lp, lq = _log_cdf_pair(link, x @ b)
        return float(np.sum(y * lp + (1 - y) * lq))

    current = loglik(beta)
    for _ in range(max_iter):
        eta = x @ beta
        if link == "logit":
            mu = special.expit(eta)
            w = mu * (1 - mu)
            score = x.T @ (y - mu)
        else:
            # ratio phi/Phi and phi/(1-Phi) via log-space for stability
            logpdf = stats.norm.logpdf(eta)
            lp, lq = _log_cdf_pair(link, eta)
            r1 = np.exp(logpdf - lp)
            r0 = np.exp(logpdf - lq)
            score = x.T @ (y * r1 - (1 - y) * r0)
            w = np.exp(2 * logpdf - lp - lq)
        info = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(info + 1e-12 * np.eye(info.shape[0]), score)
        except np.linalg.LinAlgError as exc:
            raise NuisanceError("singular information matrix in GLM fit") from exc
        scale = 1.0
        while True:
            cand = beta + scale * step
            value = loglik(cand)
            if value >= current - 1e-12 or scale < 1e-8:
                break
            scale /= 2
        beta, current = cand, value
        if np.linalg.norm(beta) > 1e6:
            raise NuisanceError("perfect separation: coefficient norm exceeds 1e6")
        if np.max(np.abs(scale * step)) < tol:
            return beta
    raise NuisanceError(f"GLM did not converge in {max_iter} iterations (possible separation)")


@dataclass(frozen=True)
class PropensityModel:
    link: str
    coefficients: np.ndarray
    clip: float = DEFAULT_CLIP

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if not 0.0 < self.clip < 0.5:
            raise ValueError("clip must lie in (0, 0.5)")

    def e1(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float).reshape(np.shape(c)[0], -1)
        eta = self.coefficients[0] + c @ self.coefficients[1:]
        return np.clip(_cdf(self.link, eta), self.clip, 1.0 - self.clip)

    def probs(self, c: np.ndarray) -> np.ndarray:
        """``(n, 2)`` array of ``(e0, e1)``; rows sum to one exactly."""
        e1 = self.e1(c)
        return np.column_stack([1.0 - e1, e1])


def fit_propensity(ds: Dataset, link: str = "probit", clip: float = DEFAULT_CLIP) -> PropensityModel:
    if not ds.has_both_arms():
        raise NuisanceError("both exposure values must be present")
    beta = fit_binary_glm(with_intercept(ds.c), ds.a, link)
    return PropensityModel(link, beta, clip)


def _as_index(idx) -> list[int]:
    return [int(i) for i in np.atleast_1d(np.asarray(idx, dtype=int))]


def _broadcast_rows(arr: np.ndarray, ndim: int) -> np.ndarray:
    """Insert singleton axes after the row axis so ``arr`` aligns with ``ndim``-d values."""
    return arr.reshape(arr.shape[:1] + (1,) * (ndim - 2) + arr.shape[1:])


def _exposure_column(a, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(a, dtype=float), (n,)).astype(float)


@dataclass(frozen=True)
class GaussianMediatorLaw:
    """``M | C=c, A=a ~ N(intercept + theta_mc c + theta_ma a, cov)``."""

    intercept: np.ndarray
    theta_mc: np.ndarray
    theta_ma: np.ndarray
    cov: np.ndarray
    is_gaussian: bool = field(default=True, init=False)

    @property
    def p(self) -> int:
        return self.theta_ma.shape[0]

    def mean(self, c: np.ndarray, a) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        a = _exposure_column(a, c.shape[0])
        return self.intercept + c @ self.theta_mc.T + a[:, None] * self.theta_ma

    def _conditional(self, target, c, a, given, given_values):
        target, given = _as_index(target), _as_index(given) if given is not None else []
        mu = self.mean(c, a)
        k, s = conditioning_operator(self.cov, target, given)
        mean_t = mu[:, target]
        if given:
            gv = np.asarray(given_values, dtype=float)
            mg = _broadcast_rows(mu[:, given], gv.ndim)
            mean_t = _broadcast_rows(mean_t, gv.ndim) + (gv - mg) @ k.T
        return mean_t, s

    def logpdf(self, target, values, c, a, given=None, given_values=None) -> np.ndarray:
        """Log density of ``M_target = values`` given ``M_given`` (rows align with ``c``)."""
        values = np.asarray(values, dtype=float)
        mean_t, s = self._conditional(target, c, a, given, given_values)
        mean_t = _broadcast_rows(mean_t, values.ndim) if mean_t.ndim < values.ndim else mean_t
        return gaussian_logpdf(values, mean_t, s)

    def sample(self, target, c, a, count: int, rng: np.random.Generator) -> np.ndarray:
        """``(n, count, |target|)`` draws from the marginal law of ``M_target``."""
        target = _as_index(target)
        mu = self.mean(c, a)[:, target]
        return sample_gaussian(mu, self.cov[np.ix_(target, target)], count, rng)


@dataclass(frozen=True)
class BernoulliMediatorLaw:
    """Independent per-coordinate binary regressions of ``M_k`` on ``(1, C, A)``."""

    coefficients: np.ndarray
    link: str = "logit"
    is_gaussian: bool = field(default=False, init=False)

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def mean(self, c: np.ndarray, a) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        a = _exposure_column(a, c.shape[0])
        eta = self.coefficients[:, 0] + c @ self.coefficients[:, 1:-1].T + a[:, None] * self.coefficients[:, -1]
        return _cdf(self.link, eta)

    def logpdf(self, target, values, c, a, given=None, given_values=None) -> np.ndarray:
        del given, given_values  # coordinates are independent given (C, A)
        target = _as_index(target)
        values = np.asarray(values, dtype=float)
        c = np.asarray(c, dtype=float)
        a = _exposure_column(a, c.shape[0])
        eta = self.coefficients[target, 0] + c @ self.coefficients[target, 1:-1].T + a[:, None] * self.coefficients[target, -1]
        lp, lq = _log_cdf_pair(self.link, eta)
        lp = _broadcast_rows(lp, values.ndim)
        lq = _broadcast_rows(lq, values.ndim)
        return np.sum(values * lp + (1 - values) * lq, axis=-1)

    def sample(self, target, c, a, count: int, rng: np.random.Generator) -> np.ndarray:
        target = _as_index(target)
        prob = self.mean(c, a)[:, target]
        u = rng.random((prob.shape[0], count, len(target)))
        return (u < prob[:, None, :]).astype(float)


MediatorLaw = GaussianMediatorLaw | BernoulliMediatorLaw


def fit_mediator_law(ds: Dataset, discrete: bool = False, link: str = "logit"):
    """Per-coordinate regressions of ``M`` on ``(1, C, A)``."""
    design = with_intercept(ds.c, ds.a)
    if discrete:
        if not np.all((ds.m == 0) | (ds.m == 1)):
            raise NuisanceError("discrete mode requires 0/1 mediators")
        coefs = np.vstack([fit_binary_glm(design, ds.m[:, k], link) for k in range(ds.p)])
        return BernoulliMediatorLaw(coefs, link)
    fit = ols_fit(design, ds.m)
    resid = fit.residuals.reshape(ds.n, ds.p)
    cov = resid.T @ resid / (ds.n - design.shape[1])
    if np.any(np.diag(cov) <= 1e-14 * max(1.0, float(np.abs(ds.m).max()) ** 2)):
        raise NuisanceError("zero-variance mediator residual")
    coef = np.asarray(fit.coefficients).reshape(design.shape[1], ds.p)
    return GaussianMediatorLaw(coef[0], coef[1:-1].T.copy(), coef[-1].copy(), (cov + cov.T) / 2)


def density_eval(law, target, values, c, a, given=None, given_values=None, propensity=None) -> np.ndarray:
    """Conditional mediator density; ``a="marginal"`` gives ``e0 pi_{C,0} + e1 pi_{C,1}``."""
    target = _as_index(target)
    if given is not None and set(_as_index(given)) & set(target):
        raise ValueError("target and given coordinates must be disjoint")
    if isinstance(a, str):
        if a != "marginal" or propensity is None:
            raise ValueError('a must be 0, 1 or "marginal" (with a propensity model)')
        e = propensity.probs(c)
        l0 = law.logpdf(target, values, c, 0.0, given, given_values)
        l1 = law.logpdf(target, values, c, 1.0, given, given_values)
        e0 = _broadcast_rows(e[:, 0], np.ndim(l0) + 1) if np.ndim(l0) > 1 else e[:, 0]
        e1 = _broadcast_rows(e[:, 1], np.ndim(l0) + 1) if np.ndim(l0) > 1 else e[:, 1]
        return e0 * np.exp(l0) + e1 * np.exp(l1)
    return np.exp(law.logpdf(target, values, c, a, given, given_values))


def sample_conditional(law, target, c, a, count: int, rng: np.random.Generator) -> np.ndarray:
    return law.sample(target, c, a, count, rng)


@dataclass(frozen=True)
class MeanSpec:
    """Conditioning set ``S``: confounders, exposure and an ordered mediator subset."""

    confounders: bool = True
    exposure: bool = True
    mediators: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mediators", tuple(int(k) for k in self.mediators))

    def design(self, ds: Dataset) -> np.ndarray:
        blocks = []
        if self.confounders:
            blocks.append(ds.c)
        if self.exposure:
            blocks.append(ds.a[:, None])
        if self.mediators:
            blocks.append(ds.m[:, list(self.mediators)])
        return with_intercept(*blocks) if blocks else np.ones((ds.n, 1))


@dataclass(frozen=True)
class LinearMeanModel:
    spec: MeanSpec
    coefficients: np.ndarray
    is_linear: bool = field(default=True, init=False)

    def _split(self, k_c: int):
        b = self.coefficients
        pos = 1
        bc = b[pos:pos + k_c] if self.spec.confounders else np.zeros(k_c)
        pos += k_c if self.spec.confounders else 0
        ba = b[pos] if self.spec.exposure else 0.0
        pos += 1 if self.spec.exposure else 0
        return b[0], bc, ba, b[pos:]

    def predict(self, c: np.ndarray, a, m: np.ndarray | None = None) -> np.ndarray:
        """Mean at rows of ``c`` with mediators ``m`` of shape ``(n, |S|)`` or ``(n, K, |S|)``."""
        c = np.asarray(c, dtype=float)
        b0, bc, ba, bm = self._split(c.shape[1])
        base = b0 + c @ bc + ba * _exposure_column(a, c.shape[0])
        if not self.spec.mediators:
            return base
        m = np.asarray(m, dtype=float)
        return _broadcast_rows(base, m.ndim) + m @ bm if m.ndim == 3 else base + m @ bm

    def mediator_coefficients(self) -> np.ndarray:
        return self.coefficients[-len(self.spec.mediators):] if self.spec.mediators else np.zeros(0)


@dataclass(frozen=True)
class CallableMeanModel:
    """Wrap an arbitrary ``fn(c, a, m)`` obeying the :class:`LinearMeanModel` call contract."""

    spec: MeanSpec
    fn: Callable
    is_linear: bool = False

    def predict(self, c, a, m=None):
        return self.fn(np.asarray(c, dtype=float), a, m)


def fit_mean(ds: Dataset, spec: MeanSpec) -> LinearMeanModel:
    """OLS of ``Y`` on ``(1, X_S)``."""
    return LinearMeanModel(spec, ols_fit(spec.design(ds), ds.y).coefficients)


def full_spec(p: int) -> MeanSpec:
    return MeanSpec(True, True, tuple(range(p)))


def ca_spec() -> MeanSpec:
    return MeanSpec(True, True, ())


def parent_spec(j: int, parents: Sequence[int]) -> MeanSpec:
    return MeanSpec(True, True, (int(j), *sorted(int(k) for k in parents)))


@dataclass
class NuisanceBundle:
    """Propensity, mediator law and a lazily populated collection of mean models."""

    propensity: PropensityModel
    mediators: object
    means: dict = field(default_factory=dict)
    data: Dataset | None = None
    mean_fitter: Callable[[MeanSpec], object] | None = None

    def mean(self, spec: MeanSpec):
        if spec not in self.means:
            if self.mean_fitter is None:
                raise KeyError(f"no mean model for {spec}")
            self.means[spec] = self.mean_fitter(spec)
        return self.means[spec]

    @property
    def p(self) -> int:
        return self.mediators.p


def fit_bundle(ds: Dataset, link: str = "probit", clip: float = DEFAULT_CLIP,
               discrete: bool = False, mediator_link: str = "logit") -> NuisanceBundle:
    """Default parametric nuisance fits on one dataset."""
    prop = fit_propensity(ds, link, clip)
    law = fit_mediator_law(ds, discrete=discrete, link=mediator_link)
    bundle = NuisanceBundle(prop, law, data=ds, mean_fitter=lambda spec: fit_mean(ds, spec))
    bundle.mean(full_spec(ds.p))
    bundle.mean(ca_spec())
    return bundle


def make_misspecified(bundle: NuisanceBundle, scenarios: Iterable[str] | str,
                      ds: Dataset | None = None) -> NuisanceBundle:
    """Replace the named components by the default parametric forms fitted to ``ds``.

    ``wrong_link`` refits the propensity with the other link; ``wrong_outcome``
    swaps every mean model for a linear fit without interactions or powers;
    ``wrong_mediator_j`` and ``wrong_mediator_shift`` swap the mediator law for
    the Gaussian-linear fit.
    """
    if isinstance(scenarios, str):
        scenarios = [scenarios]
    scenarios = list(scenarios)
    for s in scenarios:
        if s not in MISSPECIFICATIONS:
            raise ValueError(f"unknown misspecification {s!r}")
    if not scenarios:
        return bundle
    ds = ds if ds is not None else bundle.data
    if ds is None:
        raise ValueError("a dataset is required to refit components")
    out = replace(bundle, means=dict(bundle.means))
    if "wrong_link" in scenarios:
        other = "logit" if bundle.propensity.link == "probit" else "probit"
        out.propensity = fit_propensity(ds, other, bundle.propensity.clip)
    if "wrong_outcome" in scenarios:
        out.means = {}
        out.mean_fitter = lambda spec: fit_mean(ds, spec)
    if "wrong_mediator_j" in scenarios or "wrong_mediator_shift" in scenarios:
        out.mediators = fit_mediator_law(ds)
    out.data = ds
    return out
