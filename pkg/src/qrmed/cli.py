"""Command-line interface: ``qrmed {discover,estimate,simulate,replicate}``.

Every option can also be set through an environment variable named
``QRMED_<OPTION>`` (upper case, dashes as underscores); an explicit flag wins.
Exit codes: 0 success, 1 estimation failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dataset import DataError, Dataset, Roles, load_csv, write_csv
from .discovery import pc_cpdag
from .effects_ols import EffectEstimate, ols_all_effects, ols_mediator_effects
from .effects_qr import McConfig, bootstrap_many, qr_effects, strategy_effects
from .graph import GraphError, enumerate_mec, read_adjacency_csv, write_adjacency_csv
from .nuisance import NuisanceError, fit_bundle
from .replicate import run_figure1, run_table1
from .sim import SCENARIOS, gen_scenario, random_er_truth, true_effects

SCHEMA = "qrmed-output"
SCHEMA_VERSION = 1
ENV_PREFIX = "QRMED_"
METHODS = ("ols", "qr", "qr-fast", "m0", "m1", "m2", "m3")
PLOT_COLUMNS = ("mediator", "estimand", "method", "mean", "se", "truth")


class InputError(Exception):
    """Invalid command-line configuration (exit code 2)."""


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _add(parser: argparse.ArgumentParser, flag: str, **kwargs):
    name = flag.lstrip("-")
    kwargs["default"] = _env(name, kwargs.get("default"))
    if kwargs.get("action") == "store_true":
        raw = kwargs["default"]
        kwargs["default"] = str(raw).lower() in ("1", "true", "yes", "on") if isinstance(raw, str) else bool(raw)
    parser.add_argument(flag, **kwargs)


def _split(text: str | None) -> tuple[str, ...]:
    return tuple(s.strip() for s in (text or "").split(",") if s.strip())


def _add_data_flags(p: argparse.ArgumentParser):
    _add(p, "--input", required=_env("input", None) is None, help="CSV file with a header row")
    _add(p, "--confounders", default="", help="comma-separated confounder columns")
    _add(p, "--exposure", required=_env("exposure", None) is None)
    _add(p, "--mediators", required=_env("mediators", None) is None, help="comma-separated mediator columns")
    _add(p, "--outcome", required=_env("outcome", None) is None)


def _add_output_flags(p: argparse.ArgumentParser):
    _add(p, "--out", default=None, help="output path (default: stdout)")
    _add(p, "--format", default="csv", choices=("csv", "json"))


def _threads_default():
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrmed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qrmed {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("discover", help="learn the CPDAG and report the mediator equivalence class")
    _add_data_flags(d)
    _add(d, "--alpha", type=float, default=0.01, help="PC significance level")
    _add_output_flags(d)
    _add(d, "--graph-out", default=None, help="write the full CPDAG adjacency CSV here")

    e = sub.add_parser("estimate", help="estimate DE/IE/TE and per-mediator DM/TM/IM")
    _add_data_flags(e)
    _add(e, "--method", default="qr", choices=METHODS)
    _add(e, "--alpha", type=float, default=0.05, help="confidence level is 1 - alpha")
    _add(e, "--pc-alpha", type=float, default=0.01)
    _add(e, "--mc-n", type=int, default=100)
    _add(e, "--bootstrap-b", type=int, default=500, help="0 disables the bootstrap")
    _add(e, "--seed", type=int, default=None)
    _add(e, "--graph", default=None, help="adjacency CSV (d x d or mediator p x p); learned when absent")
    _add(e, "--j", default=None, help="comma-separated 0-based mediator indices (default: all)")
    _add(e, "--mc-sampling", default="direct", choices=("direct", "importance", "literal"),
         help="Monte Carlo scheme for the direct-effect integral")
    _add(e, "--bootstrap-relearn", action="store_true", help="re-learn the CPDAG in every bootstrap replicate")
    _add(e, "--truncate", action="store_true", help="drop correction terms above log(n)")
    _add(e, "--link", default="probit", choices=("probit", "logit"))
    _add(e, "--discrete", action="store_true", help="binary mediators (per-coordinate logistic law)")
    _add(e, "--threads", type=int, default=_threads_default())
    _add_output_flags(e)

    s = sub.add_parser("simulate", help="draw datasets from a simulation design")
    _add(s, "--scenario", default="all_correct", choices=SCENARIOS)
    _add(s, "--n", type=int, default=1000)
    _add(s, "--p", type=int, default=3)
    _add(s, "--t", type=int, default=3)
    _add(s, "--j", type=int, default=None)
    _add(s, "--reps", type=int, default=1)
    _add(s, "--seed", type=int, default=None)
    _add(s, "--out", default=None, help="output directory")
    _add(s, "--threads", type=int, default=_threads_default())

    r = sub.add_parser("replicate", help="run the strategy-comparison experiments")
    r.add_argument("target", choices=("table1", "figure1"))
    _add(r, "--n", type=int, default=1000)
    _add(r, "--p", type=int, default=3)
    _add(r, "--t", type=int, default=3)
    _add(r, "--reps", type=int, default=100)
    _add(r, "--mc-n", type=int, default=100)
    _add(r, "--seed", type=int, default=None)
    _add(r, "--threads", type=int, default=_threads_default())
    _add(r, "--plot-out", default=None, help="directory for per-scenario plot-data CSVs")
    _add_output_flags(r)
    return parser


# output ----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def render(command: str, rows: list[dict], fmt: str, columns: Sequence[str] | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    if fmt == "json":
        clean = [{k: (float(r[k]) if isinstance(r[k], (float, np.floating)) else r[k]) for k in columns} for r in rows]
        doc = {"schema": SCHEMA, "version": SCHEMA_VERSION, "command": command, "columns": columns, "rows": clean}
        return json.dumps(doc, indent=2, allow_nan=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# {SCHEMA} v{SCHEMA_VERSION} command={command}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# commands --------------------------------------------------------------------

def _require_seed(args):
    if args.seed is None:
        raise InputError("--seed is required for stochastic commands")


def _load(args) -> Dataset:
    roles = Roles(_split(args.confounders), args.exposure, _split(args.mediators), args.outcome)
    ds = load_csv(args.input, roles)
    if not ds.has_both_arms():
        raise DataError("both exposure values must be present")
    return ds


def _mediator_block(adj: np.ndarray, ds: Dataset) -> np.ndarray:
    if adj.shape == (ds.d, ds.d):
        return adj[ds.t:ds.t + ds.p, ds.t:ds.t + ds.p].copy()
    if adj.shape == (ds.p, ds.p):
        return adj
    raise InputError(f"graph must be {ds.d}x{ds.d} or {ds.p}x{ds.p}, got {adj.shape[0]}x{adj.shape[1]}")


def cmd_discover(args) -> int:
    ds = _load(args)
    res = pc_cpdag(ds.matrix(), alpha=args.alpha, return_details=True)
    block = _mediator_block(res.cpdag, ds)
    members = enumerate_mec(block)
    names = list(ds.roles.columns)
    if args.graph_out:
        write_adjacency_csv(res.cpdag, args.graph_out)
    rows = []
    for i in range(ds.d):
        for k in range(ds.d):
            if res.cpdag[i, k] and not (res.cpdag[k, i] and k < i):
                kind = "undirected" if res.cpdag[k, i] else "directed"
                rows.append({"from": names[i], "to": names[k], "type": kind,
                             "mediator_block": int(ds.t <= i < ds.t + ds.p and ds.t <= k < ds.t + ds.p),
                             "mec_size": len(members), "n_tests": res.n_tests})
    if not rows:
        rows.append({"from": "", "to": "", "type": "none", "mediator_block": 0,
                     "mec_size": len(members), "n_tests": res.n_tests})
    _emit(render("discover", rows, args.format), args.out)
    return 0


def _members_for(args, ds: Dataset) -> list[np.ndarray]:
    if args.graph:
        adj = read_adjacency_csv(args.graph)
        return enumerate_mec(_mediator_block(adj, ds))
    cp = pc_cpdag(ds.matrix(), alpha=args.pc_alpha)
    return enumerate_mec(_mediator_block(cp, ds))


def _indices(args, ds: Dataset) -> list[int]:
    if args.j is None:
        return list(range(ds.p))
    try:
        idx = [int(v) for v in _split(str(args.j))]
    except ValueError as exc:
        raise InputError("--j must be comma-separated integers") from exc
    if any(not 0 <= j < ds.p for j in idx):
        raise InputError(f"mediator indices must lie in [0, {ds.p})")
    return idx


ESTIMATE_COLUMNS = ("estimand", "j", "method", "point", "se", "ci_low", "ci_high", "alpha", "ci_type",
                    "mec_size", "truncation_count", "mc_n", "mc_se", "status")


def _row(est: EffectEstimate, ci_type: str, mec_size, trunc="", mc_n="", mc_se="", status="ok") -> dict:
    r = est.as_row()
    r.update(ci_type=ci_type, mec_size=mec_size, truncation_count=trunc, mc_n=mc_n, mc_se=mc_se, status=status)
    return r


def _error_row(estimand: str, j, method: str, alpha: float, exc: Exception) -> dict:
    nan = float("nan")
    return {"estimand": estimand, "j": "" if j is None else j, "method": method, "point": nan, "se": nan,
            "ci_low": nan, "ci_high": nan, "alpha": alpha, "ci_type": "", "mec_size": "",
            "truncation_count": "", "mc_n": "", "mc_se": "", "status": f"error: {exc}"}


def _boot(args, ds, fn, seed_offset: int):
    return bootstrap_many(fn, ds, args.bootstrap_b, args.alpha, args.seed + seed_offset, n_jobs=args.threads)


def _replicate_members(args, d: Dataset, members):
    if not args.bootstrap_relearn:
        return members
    return enumerate_mec(_mediator_block(pc_cpdag(d.matrix(), alpha=args.pc_alpha), d))


def _with_boot(ests: list[EffectEstimate], boots) -> list[tuple[EffectEstimate, str]]:
    if boots is None:
        return [(e, "analytic") for e in ests]
    return [(e.with_ci(b.ci_low, b.ci_high), "bootstrap") for e, b in zip(ests, boots)]


def _point_se(ests) -> tuple[list[float], list[float]]:
    return [e.point for e in ests], [e.se for e in ests]


def _estimate_rows(args, ds: Dataset, members: list[np.ndarray]) -> list[dict]:
    method, alpha = args.method, args.alpha
    boot = args.bootstrap_b > 0
    k = len(members)
    js = _indices(args, ds)
    rows: list[dict] = []
    if method == "ols":
        for est in ols_all_effects(ds, members, alpha, mediators=[])[:3]:
            rows.append(_row(est, "analytic", ""))
        effs = {}
        for j in js:
            try:
                effs[j] = ols_mediator_effects(ds, j, members=members, alpha=alpha)
            except Exception as exc:  # noqa: BLE001 - reported per row
                effs[j] = exc
        good = [j for j in js if not isinstance(effs[j], Exception)]

        def fn(d):
            mem = _replicate_members(args, d, members)
            return _point_se([ols_mediator_effects(d, j, members=mem, alpha=alpha).im for j in good])

        boots = _boot(args, ds, fn, 1) if boot and good else None
        ims = dict(zip(good, _with_boot([effs[j].im for j in good], boots)))
        for j in js:
            if j not in ims:
                rows += [_error_row(e, j, method, alpha, effs[j]) for e in ("DM", "TM", "IM")]
                continue
            rows += [_row(effs[j].dm, "analytic", k), _row(effs[j].tm, "analytic", k), _row(*ims[j], k)]
        return rows

    fit_kw = {"link": args.link, "discrete": args.discrete}
    if method == "qr-fast" and args.discrete:
        raise InputError("qr-fast requires continuous mediators")
    mc = McConfig(n=args.mc_n, seed=args.seed, mode="exact" if method == "qr-fast" else "auto",
                  sampling=args.mc_sampling)
    nuis = fit_bundle(ds, **fit_kw)
    if method not in ("qr", "qr-fast"):
        for j in js:
            try:
                for est in strategy_effects(ds, nuis, j, method, members=members, mc=mc, alpha=alpha):
                    rows.append(_row(est, "analytic", k))
            except Exception as exc:  # noqa: BLE001 - reported per row
                rows += [_error_row(e, j, method, alpha, exc) for e in ("DM", "TM", "IM")]
        return rows

    def run(d, bundle, only=None, mem=members):
        out = {}
        for j in (js if only is None else only):
            try:
                e = qr_effects(d, bundle, j, members=mem, mc=mc, truncate=args.truncate, alpha=alpha,
                               method=method)
                out[j] = (e.dm, e.tm, e.im)
            except Exception as exc:  # noqa: BLE001 - reported per row
                if only is not None:
                    raise
                out[j] = exc
        return out

    effs = run(ds, nuis)
    good = [j for j in js if not isinstance(effs[j], Exception)]

    def fn(d):
        res = run(d, fit_bundle(d, **fit_kw), good, _replicate_members(args, d, members))
        return _point_se([q.estimate for j in good for q in res[j]])

    boots = _boot(args, ds, fn, 1) if boot and good else None
    flat = [q for j in good for q in effs[j]]
    done = dict(zip([(j, i) for j in good for i in range(3)], zip(flat, _with_boot([q.estimate for q in flat], boots))))
    for j in js:
        if j not in good:
            rows += [_error_row(e, j, method, alpha, effs[j]) for e in ("DM", "TM", "IM")]
            continue
        for i in range(3):
            q, (est, ci_type) = done[(j, i)]
            rows.append(_row(est, ci_type, k, q.truncation_count, q.mc_n, q.mc_se))
    return rows


def cmd_estimate(args) -> int:
    ds = _load(args)
    if args.method != "ols" or args.bootstrap_b > 0:
        _require_seed(args)
    if not 0 < args.alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    if args.bootstrap_b and args.bootstrap_b < 50:
        raise InputError("--bootstrap-b must be 0 or at least 50")
    members = _members_for(args, ds)
    rows = _estimate_rows(args, ds, members)
    _emit(render("estimate", rows, args.format, ESTIMATE_COLUMNS), args.out)
    return 0 if any(r["status"] == "ok" for r in rows) else 1


def cmd_simulate(args) -> int:
    _require_seed(args)
    if not args.out:
        raise InputError("--out directory is required for simulate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = random_er_truth(args.p, args.t, args.seed, heteroscedastic=args.scenario in ("continuous_all", "discrete_all"),
                            j=args.j)
    effects = {str(j): true_effects(truth, args.scenario, j=j).as_dict() for j in range(truth.p)}
    manifest = {"schema": SCHEMA, "version": SCHEMA_VERSION, "command": "simulate", "scenario": args.scenario,
                "n": args.n, "reps": args.reps, "seed": args.seed, "truth": truth.to_dict(), "true_effects": effects,
                "files": []}
    for r in range(args.reps):
        ds = gen_scenario(truth, args.scenario, args.n, np.random.SeedSequence(args.seed, spawn_key=(r,)))
        name = f"rep_{r:04d}.csv"
        write_csv(ds, out / name)
        manifest["files"].append(name)
    (out / "truth.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


def cmd_replicate(args) -> int:
    _require_seed(args)
    if args.target == "table1":
        truth, rows = run_table1(args.n, args.reps, args.seed, args.p, args.t, n_jobs=args.threads)
    else:
        truth, rows = run_figure1(args.n, args.reps, args.seed, args.p, args.t, args.mc_n, n_jobs=args.threads)
    table = [r.as_dict() for r in rows]
    _emit(render(f"replicate-{args.target}", table, args.format), args.out)
    if args.plot_out:
        pdir = Path(args.plot_out)
        pdir.mkdir(parents=True, exist_ok=True)
        for sc in sorted({r.scenario for r in rows}):
            sub = [{k: d[k] for k in PLOT_COLUMNS} for d in table if d["scenario"] == sc]
            (pdir / f"{args.target}_{sc}.csv").write_text(render(f"plot-{sc}", sub, "csv", PLOT_COLUMNS))
    return 0


COMMANDS = {"discover": cmd_discover, "estimate": cmd_estimate, "simulate": cmd_simulate,
            "replicate": cmd_replicate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, DataError, GraphError, FileNotFoundError) as exc:
        print(f"qrmed: error: {exc}", file=sys.stderr)
        return 2
    except (NuisanceError, np.linalg.LinAlgError, RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"qrmed: estimation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
