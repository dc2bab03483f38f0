"""PC structure learning with Fisher-z partial-correlation tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .graph import GraphError, _orient, meek_closure, topological_order
from .linmodel import JITTER, SingularError

DEFAULT_ALPHA = 0.01


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    p_value: float
    independent: bool


def _partial_correlation(corr: np.ndarray, i: int, j: int, s: Sequence[int]) -> float:
    idx = [i, j, *s]
    sub = corr[np.ix_(idx, idx)]
    try:
        prec = np.linalg.inv(sub)
        if not np.all(np.isfinite(prec)) or np.linalg.cond(sub) > 1e14:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sub = sub + JITTER * np.eye(len(idx))
        if np.linalg.cond(sub) > 1e14:
            raise SingularError("singular conditioning covariance")
        prec = np.linalg.inv(sub)
    r = -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])
    return float(np.clip(r, -1.0, 1.0))


def fisher_z_from_corr(corr: np.ndarray, n: int, i: int, j: int, s: Sequence[int],
                       alpha: float = DEFAULT_ALPHA) -> CiTestResult:
    s = list(s)
    if i == j or i in s or j in s:
        raise ValueError("i and j must differ and lie outside the conditioning set")
    dof = n - len(s) - 3
    if dof <= 0:
        raise ValueError(f"need n > |s| + 3, got n={n}, |s|={len(s)}")
    r = _partial_correlation(corr, i, j, s)
    r = float(np.clip(r, -1.0 + 1e-15, 1.0 - 1e-15))
    z = float(np.sqrt(dof) * np.arctanh(r))
    p = float(min(1.0, 2.0 * stats.norm.sf(abs(z))))
    return CiTestResult(z, p, p > alpha)


def correlation_matrix(data: np.ndarray, rank: bool = False) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if rank:
        x = np.apply_along_axis(stats.rankdata, 0, x)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        raise SingularError("constant column in data")
    return np.corrcoef(x, rowvar=False)


def fisher_z_test(data: np.ndarray, i: int, j: int, s: Sequence[int] = (),
                  alpha: float = DEFAULT_ALPHA, rank: bool = False) -> CiTestResult:
    """Test ``X_i`` independent of ``X_j`` given ``X_s`` on an ``n x d`` matrix."""
    x = np.asarray(data, dtype=float)
    return fisher_z_from_corr(correlation_matrix(x, rank), x.shape[0], i, j, s, alpha)


@dataclass(frozen=True)
class PcResult:
    cpdag: np.ndarray
    sepsets: dict
    n_tests: int


def pc_skeleton(corr: np.ndarray, n: int, alpha: float):
    d = corr.shape[0]
    adj = np.ones((d, d), dtype=bool)
    np.fill_diagonal(adj, False)
    sepsets: dict[tuple[int, int], tuple[int, ...]] = {}
    n_tests = 0
    level = 0
    while True:
        snapshot = {i: [int(k) for k in np.flatnonzero(adj[i])] for i in range(d)}
        if all(len(v) - 1 < level for v in snapshot.values()):
            break
        if n - level - 3 <= 0:
            break
        for i, j in itertools.combinations(range(d), 2):
            if not adj[i, j]:
                continue
            found = None
            for x, y in ((i, j), (j, i)):
                pool = [k for k in snapshot[x] if k != y]
                if len(pool) < level:
                    continue
                for s in itertools.combinations(pool, level):
                    n_tests += 1
                    if fisher_z_from_corr(corr, n, i, j, s, alpha).independent:
                        found = tuple(sorted(s))
                        break
                if found is not None:
                    break
            if found is not None:
                adj[i, j] = adj[j, i] = False
                sepsets[(i, j)] = found
        level += 1
    return adj, sepsets, n_tests


def orient_v_structures(skel: np.ndarray, sepsets: dict) -> np.ndarray:
    d = skel.shape[0]
    out = skel.astype(np.int8)
    for i, k in itertools.combinations(range(d), 2):
        if skel[i, k]:
            continue
        sep = sepsets.get((i, k), ())
        for j in range(d):
            if not (skel[i, j] and skel[k, j]) or j in sep:
                continue
            # keep existing orientations; skip a collider that would reverse or cycle
            if out[j, i] and not out[i, j] or out[j, k] and not out[k, j]:
                continue
            trial = out.copy()
            _orient(trial, i, j)
            _orient(trial, k, j)
            if topological_order(trial & (1 - trial.T)) is not None:
                out = trial
    return out


def pc_cpdag(data: np.ndarray, alpha: float = DEFAULT_ALPHA, rank: bool = False,
             return_details: bool = False):
    """Order-stable PC: skeleton, collider orientation, Meek closure."""
    x = np.asarray(data, dtype=float)
    n, d = x.shape
    if n < d + 5:
        raise ValueError(f"PC needs n >= d + 5, got n={n}, d={d}")
    corr = correlation_matrix(x, rank)
    skel, sepsets, n_tests = pc_skeleton(corr, n, alpha)
    pdag = orient_v_structures(skel, sepsets)
    try:
        cpdag = meek_closure(pdag)
    except GraphError:
        cpdag = pdag
    if return_details:
        return PcResult(cpdag, sepsets, n_tests)
    return cpdag
