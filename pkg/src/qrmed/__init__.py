"""Interventional mediation effects for multiple interacting mediators.

OLS and quadruply robust estimators of per-mediator direct and indirect
effects on causal graphs, with PC structure learning, Markov-equivalence
enumeration and a simulation engine with known ground truth.
"""

from .dataset import DataError, Dataset, Roles, centralize, load_csv, write_csv
from .discovery import fisher_z_test, pc_cpdag
from .effects_ols import (EffectEstimate, ols_all_effects, ols_de_ie, ols_dm, ols_im_avg, ols_mediator_effects,
                          reg_coef_first)
from .effects_qr import (McConfig, QrEstimate, ScoreTerms, fast_qr, qr_dm, qr_effects, qr_im_avg, qr_tm,
                         score_kappa, score_variance, score_varrho, score_zeta, strategy_effects,
                         bootstrap_many, symmetric_t_bootstrap)
from .graph import brute_force_mec, cpdag_of_dag, enumerate_mec, meek_closure, mediator_subgraph
from .nuisance import NuisanceBundle, fit_bundle, make_misspecified
from .replicate import learned_members, run_figure1, run_table1
from .sim import SemiLinearTruth, gen_scenario, oracle_bundle, random_er_truth, true_effects

__all__ = [
    "DataError", "Dataset", "Roles", "centralize", "load_csv", "write_csv",
    "fisher_z_test", "pc_cpdag",
    "EffectEstimate", "ols_all_effects", "ols_de_ie", "ols_dm", "ols_im_avg", "ols_mediator_effects", "reg_coef_first",
    "McConfig", "QrEstimate", "ScoreTerms", "fast_qr", "qr_dm", "qr_effects", "qr_im_avg", "qr_tm",
    "score_kappa", "score_variance", "score_varrho", "score_zeta", "strategy_effects",
    "bootstrap_many", "symmetric_t_bootstrap",
    "brute_force_mec", "cpdag_of_dag", "enumerate_mec", "meek_closure", "mediator_subgraph",
    "NuisanceBundle", "fit_bundle", "make_misspecified",
    "learned_members", "run_figure1", "run_table1",
    "SemiLinearTruth", "gen_scenario", "oracle_bundle", "random_er_truth", "true_effects",
]

__version__ = "0.1.0"
