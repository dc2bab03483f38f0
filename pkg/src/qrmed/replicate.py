"""Replication drivers: strategy comparison per misspecification scenario and per mediator.

Every replicate draws a fresh dataset from one fixed random truth, learns the
CPDAG with PC, fits the default parametric nuisances and evaluates each
strategy.  Bias is ``mean(estimate) - truth`` and its Monte-Carlo SE is
``sd(estimate) / sqrt(reps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .dataset import Dataset
from .discovery import pc_cpdag
from .effects_qr import STRATEGIES, McConfig, qr_effects, strategy_effects
from .graph import GraphError, enumerate_mec
from .nuisance import fit_bundle
from .sim import SINGLE_MEDIATOR_SCENARIOS, SemiLinearTruth, gen_scenario, random_er_truth, true_effects

METHODS = (*STRATEGIES, "qr")
FIGURE_SCENARIOS = ("continuous_all", "discrete_all")


def learned_members(ds: Dataset, alpha: float = 0.01) -> list[np.ndarray]:
    """MEC members of the PC estimate's mediator block (empty graph if learning fails)."""
    cp = pc_cpdag(ds.matrix(), alpha=alpha)
    block = cp[ds.t:ds.t + ds.p, ds.t:ds.t + ds.p]
    try:
        return enumerate_mec(block)
    except GraphError:
        return [np.zeros((ds.p, ds.p), dtype=np.int8)]


def estimate_methods(ds: Dataset, j: int, members, mc: McConfig, truncate: bool = False,
                     discrete: bool = False) -> dict:
    """``{(method, estimand): point}`` for the four single-model strategies and QR."""
    nuis = fit_bundle(ds, link="probit", discrete=discrete)
    out = {}
    for s in STRATEGIES:
        dm, _, im = strategy_effects(ds, nuis, j, s, members=members, mc=mc)
        out[(s, "DM")], out[(s, "IM")] = dm.point, im.point
    eff = qr_effects(ds, nuis, j, members=members, mc=mc, truncate=truncate)
    out[("qr", "DM")], out[("qr", "IM")] = eff.dm.point, eff.im.point
    return out


def _seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=key)


def _one_rep(truth, scenario, sc_idx, rep, n, seed, mediators, mc, truncate):
    with threadpool_limits(1):
        ds = gen_scenario(truth, scenario, n, _seed(seed, sc_idx, rep))
        members = learned_members(ds)
        rep_mc = McConfig(mc.n, int(_seed(seed, 1000 + sc_idx, rep).generate_state(1)[0]), mc.mode,
                          mc.sampling, mc.batches, mc.chunk)
        discrete = scenario == "discrete_all"
        return {j: estimate_methods(ds, j, members, rep_mc, truncate, discrete) for j in mediators}


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    mediator: int
    method: str
    estimand: str
    mean: float
    se: float
    truth: float

    @property
    def bias(self) -> float:
        return self.mean - self.truth

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "mediator": self.mediator, "method": self.method,
                "estimand": self.estimand, "mean": self.mean, "se": self.se, "truth": self.truth,
                "bias": self.bias}


def _summarize(scenario, mediators, results, truths) -> list[SummaryRow]:
    rows = []
    for j in mediators:
        for method in METHODS:
            for est in ("DM", "IM"):
                vals = np.array([r[j][(method, est)] for r in results])
                se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
                truth = truths[j].dm if est == "DM" else truths[j].im
                rows.append(SummaryRow(scenario, j, method, est, float(np.mean(vals)), se, truth))
    return rows


def run_scenarios(truth: SemiLinearTruth, scenarios, n: int, reps: int, seed: int,
                  mediators=None, mc: McConfig | None = None, truncate: bool = False,
                  n_jobs: int = 1) -> list[SummaryRow]:
    mediators = [truth.j] if mediators is None else list(mediators)
    mc = mc or McConfig()
    rows = []
    for sc in scenarios:
        sc_idx = list(SINGLE_MEDIATOR_SCENARIOS + FIGURE_SCENARIOS).index(sc)
        args = [(truth, sc, sc_idx, r, n, seed, mediators, mc, truncate) for r in range(reps)]
        if n_jobs == 1:
            results = [_one_rep(*a) for a in args]
        else:
            results = Parallel(n_jobs=n_jobs)(delayed(_one_rep)(*a) for a in args)
        truths = {j: true_effects(truth, sc, j=j) for j in mediators}
        rows += _summarize(sc, mediators, results, truths)
    return rows


def most_mediated(truth: SemiLinearTruth) -> SemiLinearTruth:
    """Retarget ``truth`` at the mediator with the largest true ``|IM_j|`` in the all-correct design."""
    ims = [abs(true_effects(truth, "all_correct", j=j).im) for j in range(truth.p)]
    return replace(truth, j=int(np.argmax(ims)))


def run_table1(n: int = 1000, reps: int = 100, seed: int = 0, p: int = 3, t: int = 3,
               n_jobs: int = 1, truth: SemiLinearTruth | None = None) -> tuple[SemiLinearTruth, list[SummaryRow]]:
    """Bias of every strategy for the pre-selected mediator under the five single-component scenarios.

    Without an explicit truth the target is the most mediated mediator of a random truth.
    """
    truth = truth or most_mediated(random_er_truth(p, t, seed))
    rows = run_scenarios(truth, SINGLE_MEDIATOR_SCENARIOS, n, reps, seed, mc=McConfig(seed=seed), n_jobs=n_jobs)
    return truth, rows


def run_figure1(n: int = 1000, reps: int = 100, seed: int = 0, p: int = 3, t: int = 3, mc_n: int = 100,
                n_jobs: int = 1, truth: SemiLinearTruth | None = None) -> tuple[SemiLinearTruth, list[SummaryRow]]:
    """Per-mediator means for the continuous (closed form) and binary (Monte Carlo) all-mediator designs."""
    truth = truth or random_er_truth(p, t, seed, heteroscedastic=True)
    cont = run_scenarios(truth, ["continuous_all"], n, reps, seed, range(truth.p), McConfig(seed=seed), n_jobs=n_jobs)
    disc = run_scenarios(truth, ["discrete_all"], n, reps, seed, range(truth.p),
                         McConfig(n=mc_n, seed=seed, mode="mc"), truncate=True, n_jobs=n_jobs)
    return truth, cont + disc
