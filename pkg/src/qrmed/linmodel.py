"""Dense linear-model kernels: OLS, the partialling-out transform, Gaussian laws."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

JITTER = 1e-10
_RANK_TOL = 1e-10
_COND_LIMIT = 1e12


class SingularError(np.linalg.LinAlgError):
    """Design or covariance is singular beyond the jitter tolerance."""


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray

    @property
    def sigma2(self) -> float:
        """Residual variance with divisor n - k."""
        n = self.residuals.shape[0]
        k = self.coefficients.shape[0]
        return float(self.residuals @ self.residuals / max(n - k, 1))


def _solve_ridge(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    gram = design.T @ design
    gram = gram + JITTER * np.eye(gram.shape[0])
    if np.linalg.cond(gram) > 1.0 / (_RANK_TOL * JITTER):
        raise SingularError("design is rank deficient beyond jitter tolerance")
    return linalg.solve(gram, design.T @ response, assume_a="pos")


def ols_coefficients(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Least-squares coefficients via QR, with one ridge-jitter retry.

    ``response`` may be a vector or an ``n x r`` matrix of responses.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n, k = x.shape
    if n <= k:
        raise SingularError(f"need more rows than columns, got n={n}, k={k}")
    if k == 0:
        return np.zeros((0,) + y.shape[1:])
    q, r = linalg.qr(x, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() > _RANK_TOL * max(diag.max(), 1.0) and diag.max() / diag.min() < _COND_LIMIT:
        return linalg.solve_triangular(r, q.T @ y)
    return _solve_ridge(x, y)


def ols_fit(design: np.ndarray, response: np.ndarray) -> OlsFit:
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    beta = ols_coefficients(x, y)
    fitted = x @ beta
    return OlsFit(beta, y - fitted, fitted)


def with_intercept(*blocks: np.ndarray) -> np.ndarray:
    cols = [np.asarray(b, dtype=float).reshape(b.shape[0], -1) for b in blocks]
    n = cols[0].shape[0]
    return np.column_stack([np.ones(n), *cols])


def residualize(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``(I - P_Z) X``; ``z`` may have zero columns."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] == 0:
        return x.copy()
    return x - z @ ols_coefficients(z, x)


def gamma_transform(x_block: np.ndarray, z_block: np.ndarray) -> np.ndarray:
    """``[X'(I-P_Z)X]^{-1} X'(I-P_Z)`` as a ``k1 x n`` matrix."""
    x = np.asarray(x_block, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    rx = residualize(x, z_block)
    gram = rx.T @ rx
    if np.linalg.cond(gram) > 1.0 / (_RANK_TOL * JITTER):
        raise SingularError("partialled-out block is singular")
    return linalg.solve(gram, rx.T, assume_a="pos")


@dataclass(frozen=True)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise ValueError("covariance must be symmetric")
        cov = (cov + cov.T) / 2
        if mean.size and np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, idx: Sequence[int]) -> "GaussianLaw":
        idx = list(idx)
        return GaussianLaw(self.mean[idx], self.cov[np.ix_(idx, idx)])


def _spd_inverse(block: np.ndarray) -> np.ndarray:
    if block.size == 0:
        return block.copy()
    try:
        chol = linalg.cho_factor(block)
    except linalg.LinAlgError:
        try:
            chol = linalg.cho_factor(block + JITTER * np.eye(block.shape[0]))
        except linalg.LinAlgError as exc:
            raise SingularError("conditioning block is singular") from exc
    return linalg.cho_solve(chol, np.eye(block.shape[0]))


def conditioning_operator(cov: np.ndarray, target: Sequence[int], given: Sequence[int]):
    """Return ``(K, S)`` with ``E[x_T | x_G] = mu_T + K (x_G - mu_G)`` and conditional covariance ``S``."""
    target, given = list(target), list(given)
    s_tt = cov[np.ix_(target, target)]
    if not given:
        return np.zeros((len(target), 0)), s_tt.copy()
    s_tg = cov[np.ix_(target, given)]
    k = s_tg @ _spd_inverse(cov[np.ix_(given, given)])
    s = s_tt - k @ s_tg.T
    return k, (s + s.T) / 2


def gaussian_condition(law: GaussianLaw, given: Sequence[int], values: np.ndarray) -> GaussianLaw:
    """Conditional law of the remaining coordinates given ``x[given] = values``."""
    given = list(given)
    if len(set(given)) != len(given) or any(not 0 <= g < law.dim for g in given):
        raise ValueError("invalid conditioning indices")
    target = [i for i in range(law.dim) if i not in given]
    k, s = conditioning_operator(law.cov, target, given)
    values = np.asarray(values, dtype=float).reshape(-1)
    mean = law.mean[target] + k @ (values - law.mean[given])
    return GaussianLaw(mean, s)


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Vectorized log density; ``x`` and ``mean`` broadcast over leading axes."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    k = cov.shape[0]
    diff = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    if k == 0:
        return np.zeros(diff.shape[:-1])
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        try:
            chol = linalg.cholesky(cov + JITTER * np.eye(k), lower=True)
        except linalg.LinAlgError as exc:
            raise SingularError("covariance is singular") from exc
    flat = diff.reshape(-1, k)
    z = linalg.solve_triangular(chol, flat.T, lower=True)
    quad = np.sum(z * z, axis=0).reshape(diff.shape[:-1])
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (quad + logdet + k * np.log(2.0 * np.pi))


def gaussian_density(x: np.ndarray, law: GaussianLaw) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != law.dim:
        raise ValueError("dimension mismatch")
    return float(np.exp(gaussian_logpdf(x, law.mean, law.cov)))


def sample_gaussian(mean: np.ndarray, cov: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draws with shape ``mean.shape[:-1] + (count, k)``; zero covariance returns the mean."""
    mean = np.asarray(mean, dtype=float)
    k = mean.shape[-1]
    if k == 0:
        return np.zeros(mean.shape[:-1] + (count, 0))
    eig, vec = np.linalg.eigh((cov + cov.T) / 2)
    root = vec * np.sqrt(np.clip(eig, 0.0, None))
    z = rng.standard_normal(mean.shape[:-1] + (count, k))
    return mean[..., None, :] + z @ root.T
