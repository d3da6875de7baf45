"""Experiment runner: flat YAML configs in, CSV traces and a JSON summary out.

A config is a flat mapping, for instance::

    experiment: fig2-realtime
    n_agents: 6
    horizon: 96
    K: [1, 10, 100]
    alpha: 0.05

``list-experiments`` prints the registry; ``validate`` checks a config
without running it.
"""

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import market as mk
from .distributed import (
    distributed_init,
    invariance_check,
    lyapunov_ratios,
    measure_eta,
    random_start,
    run_rounds,
    tune_alpha,
    write_round_trace,
)
from .exceptions import ContractViolation, DivergenceError, InadmissibleStep, NotStronglyMonotone
from .full import SolverConfig, solve
from .game import GameConstants, estimate_constants
from .graphs import (
    alternating_matchings,
    complete_graph,
    metropolis_weights,
    path_graph,
    random_graph,
    ring_graph,
)
from .metric import (
    build_metric,
    contraction_factor,
    default_step,
    window_from_constants,
)
from .online import (
    kkt_root,
    measure_drift,
    online_distributed_init,
    online_distributed_step,
    reinit_perturbation,
    run_online_full,
    tracking_bound_distributed,
    tracking_bound_full,
    tracking_errors,
)
from .synthetic import (
    affine_solution,
    drifting_sequence,
    exact_constants,
    random_affine_data,
    random_affine_game,
)
from .traces import FULL_HEADER, TRACKING_HEADER, write_csv

# -- schema --------------------------------------------------------------------

INT, FLOAT, STR, INTS = "int", "float", "str", "int-list"

COMMON = {
    "experiment": STR, "seed": INT, "out_dir": STR,
    "mu_F": FLOAT, "ell_F": FLOAT, "mu_A": FLOAT, "ell_A": FLOAT,
}

MARKET_KEYS = {
    "n_agents": INT, "horizon": INT, "gamma": FLOAT, "c_mg": FLOAT, "c_dg": FLOAT,
    "c_tr": FLOAT, "kappa_tr": FLOAT, "trading_graph_seed": INT, "profile_seed": INT,
    "K": INTS, "alpha": FLOAT, "max_iter": INT, "tol": FLOAT, "graph": STR,
}

AFFINE_KEYS = {
    "n_agents": INT, "n_local": INT, "m": INT, "q": INT, "coupling": FLOAT,
    "alpha": FLOAT, "max_iter": INT, "tol": FLOAT,
}

DEFAULTS = {
    "seed": 0, "n_agents": 6, "horizon": 96, "gamma": 1e3, "c_mg": 0.1, "c_dg": 0.3,
    "c_tr": 0.05, "kappa_tr": 0.1, "trading_graph_seed": 0, "profile_seed": 0,
    "graph": "ring", "n_local": 2, "m": 2, "q": 2, "coupling": 0.3, "tol": 1e-8,
    "rounds": 2000, "b_rate": 0.01, "phi_amp": 0.0, "phi_period": 20.0,
}

GRAPHS = ("ring", "complete", "path", "random", "matchings")


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _check_type(kind, v):
    if kind == INT:
        return _is_int(v)
    if kind == FLOAT:
        return (_is_int(v) or isinstance(v, float)) and np.isfinite(v)
    if kind == STR:
        return isinstance(v, str)
    if kind == INTS:
        return _is_int(v) or (isinstance(v, list) and v and all(_is_int(e) for e in v))
    raise AssertionError(kind)


@dataclass
class ValidationReport:
    errors: list
    warnings: list

    @property
    def ok(self):
        return not self.errors

    def __str__(self):
        lines = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


# -- experiments --------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    run: object
    keys: dict
    description: str


def _comm_graph(name, N, seed):
    if name == "ring":
        return metropolis_weights(ring_graph(N))
    if name == "complete":
        return metropolis_weights(complete_graph(N))
    if name == "path":
        return metropolis_weights(path_graph(N))
    if name == "random":
        return metropolis_weights(random_graph(N, 0.5, seed))
    if name == "matchings":
        return alternating_matchings(N)
    raise ContractViolation(f"unknown graph '{name}'")


def _declared_constants(cfg):
    keys = ("mu_F", "ell_F", "mu_A", "ell_A")
    if all(k in cfg for k in keys):
        return GameConstants(*(float(cfg[k]) for k in keys))
    return None


def _market(cfg, T):
    N = cfg["n_agents"]
    specs = mk.synthetic_specs(N, cfg["horizon"], cfg["profile_seed"], cfg["c_mg"],
                               cfg["c_dg"], cfg["c_tr"], cfg["kappa_tr"], cfg["gamma"])
    G = mk.trading_graph(N, cfg["trading_graph_seed"])
    return specs, G, mk.layout(specs, G, T)


def _slot_roots(specs, G, T):
    sols, w = [], None
    for t in range(T):
        g = mk.build_slot_game(specs, G, t)
        if w is None:
            w = np.concatenate([np.ones(g.n), np.zeros(g.n_dual)])
        w = kkt_root(g, w)
        sols.append(w)
    return sols


def _market_constants(cfg, game, x_star):
    """Declared constants, or ones certified on a ball around the equilibrium.

    The radius keeps the ball inside the barrier's logarithmic region.
    """
    c = _declared_constants(cfg)
    if c is not None:
        return c
    est = estimate_constants(game, 500, radius=0.25, seed=cfg["seed"], center=x_star)
    lmin, norm_A = game.constraint_spectrum
    return GameConstants(est.mu_F, est.ell_F, lmin, norm_A, est.ell_sigma)


def _log_slope(values):
    v = np.asarray(values, dtype=float)
    keep = v > 0
    k = np.arange(v.size)[keep]
    if k.size < 2:
        return 0.0
    return float(np.polyfit(k, np.log(v[keep]), 1)[0])


def run_fig1(cfg, out):
    T = cfg["horizon"]
    specs, G, lay = _market(cfg, T)
    game = mk.build_dayahead_game(specs, G, T)
    w_star = mk.assemble_dayahead(lay, _slot_roots(specs, G, T))
    c = _market_constants(cfg, game, w_star[:game.n])
    met = build_metric(game, c)
    graph = _comm_graph(cfg["graph"], game.N, cfg["seed"])
    alpha = cfg.get("alpha", 0.0125)
    state = distributed_init(game, mk.initial_decision(lay, specs, cfg["seed"]))
    lowest = [np.inf]

    def watch(s):
        lowest[0] = min(lowest[0], float(mk.barrier_quantities(lay, s.x).min()))

    state, trace = run_rounds(game, graph, state, alpha, cfg.get("max_iter", 100_000),
                              met=met, xi_star=w_star, tol=cfg["tol"], monitor=watch)
    rows = [(r[0], r[5], r[1]) for r in trace]
    write_csv(out / "fig1.csv", FULL_HEADER, rows)
    write_round_trace(out / "fig1_rounds.csv", trace)
    V = np.array([r[2] for r in rows])
    inv = invariance_check(game, state)
    return {
        "alpha": alpha,
        "rounds": int(state.k),
        "final_kkt_residual": rows[-1][1],
        "converged": rows[-1][1] <= cfg["tol"],
        "lyapunov_monotone": bool(np.all(np.diff(V) <= 0)),
        "log_lyapunov_slope": _log_slope(V),
        "mu_F": c.mu_F, "ell_F": c.ell_F,
        "min_barrier_quantity": lowest[0],
        "reciprocity_violation": mk.reciprocity_violation(game, state.x),
        "balance_violation": mk.balance_violation(game, state.x),
        "invariance_max": inv.max(),
        "invariance_ok": inv.max() <= 1e-9,
    }


def _realtime_runs(cfg):
    """Shared engine of fig2 and fig3: one online run per ``K``."""
    T = cfg["horizon"]
    specs, G, lay = _market(cfg, 1)
    seq = mk.build_realtime_sequence(specs, G, T)
    sols = _slot_roots(specs, G, T)
    delta, delta_phi = measure_drift(seq, T, solutions=sols)
    g1 = seq(1)
    c = _market_constants(cfg, g1, sols[0][:g1.n])
    met = build_metric(g1, c)
    graph = _comm_graph(cfg["graph"], g1.N, cfg["seed"])
    alpha = cfg.get("alpha", 0.05)
    eta = measure_eta(g1, graph, met, alpha, sols[0], rounds=300, scale=0.5)
    _, ell_A = g1.constraint_spectrum
    x0 = mk.initial_decision(lay, specs, cfg["seed"])
    runs = {}
    for K in _as_list(cfg.get("K", [1, 10, 100])):
        bound = None
        if eta < 1:
            bound = tracking_bound_distributed(met, eta, K, delta, delta_phi, g1.N, ell_A)
        state = online_distributed_init(g1, x0)
        rows, viol, inv, lowest = [], [], 0.0, np.inf
        for t in range(1, T + 1):
            state = online_distributed_step(seq, t, graph, state, alpha, K)
            game = seq(t)
            eP, eQ = tracking_errors(met, state, sols[t - 1])
            rv = mk.reciprocity_violation(game, state.x)
            rows.append((t, eP, eQ, bound, rv))
            viol.append((t, rv, mk.balance_violation(game, state.x)))
            inv = max(inv, invariance_check(game, state).max())
            lowest = min(lowest, float(mk.barrier_quantities(lay, state.x).min()))
        runs[K] = {"rows": rows, "viol": viol, "invariance_max": inv, "min_barrier": lowest}
    info = {"alpha": alpha, "eta": eta, "delta": delta, "delta_phi": delta_phi,
            "mu_F": c.mu_F, "ell_F": c.ell_F}
    return runs, info


def _strictly_decreasing(v):
    return bool(all(a > b for a, b in zip(v[:-1], v[1:])))


def _realtime_summary(runs, info):
    Ks = sorted(runs)
    err = [float(np.mean([r[1] for r in runs[K]["rows"]])) for K in Ks]
    vio = [float(np.mean([r[1] for r in runs[K]["viol"]])) for K in Ks]
    inv = max(runs[K]["invariance_max"] for K in Ks)
    low = min(runs[K]["min_barrier"] for K in Ks)
    return {
        **info,
        "K": Ks,
        "mean_tracking_error": err,
        "mean_reciprocity_violation": vio,
        "tracking_error_decreasing": _strictly_decreasing(err),
        "violation_decreasing": _strictly_decreasing(vio),
        "invariance_max": inv,
        "invariance_ok": inv <= 1e-9,
        "min_barrier_quantity": low,
        "barrier_positive": low > 0,
    }


def run_fig2(cfg, out):
    runs, info = _realtime_runs(cfg)
    for K, r in runs.items():
        write_csv(out / f"tracking_K{K}.csv", TRACKING_HEADER, r["rows"])
    return _realtime_summary(runs, info)


def run_fig3(cfg, out):
    runs, info = _realtime_runs(cfg)
    for K, r in runs.items():
        write_csv(out / f"violation_K{K}.csv",
                  ("t", "reciprocity_violation", "balance_violation"), r["viol"])
    return _realtime_summary(runs, info)


def _affine(cfg):
    game, c = random_affine_game(cfg["n_agents"], cfg["n_local"], cfg["m"], cfg["q"],
                                 cfg["seed"], cfg["coupling"])
    return game, _declared_constants(cfg) or c


def run_synthetic_full(cfg, out):
    game, c = _affine(cfg)
    met = build_metric(game, c)
    w_star = affine_solution(game)
    alpha = cfg.get("alpha", default_step(met))
    rho = contraction_factor(met, alpha)
    res = solve(game, met, SolverConfig(alpha, cfg["tol"], cfg.get("max_iter", 100_000)),
                reference=w_star)
    res.write_trace(out / "full.csv")
    d = np.array([r[2] for r in res.trace])
    ok = bool(np.all(d[1:] <= rho * d[:-1] + 1e-14))
    return {"alpha": alpha, "rho": rho, "mu_op": met.mu_op, "ell_op": met.ell_op,
            "iterations": res.iterations, "converged": res.converged,
            "final_residual": res.residual, "rate_ok": ok}


def run_synthetic_distributed(cfg, out):
    game, c = _affine(cfg)
    met = build_metric(game, c)
    w_star = affine_solution(game)
    graph = _comm_graph(cfg["graph"], game.N, cfg["seed"])
    alpha = cfg.get("alpha") or tune_alpha(game, met, graph, seed=cfg["seed"], xi_star=w_star)
    start = random_start(game, cfg["seed"], center=w_star)
    state, trace = run_rounds(game, graph, start, alpha, cfg["rounds"], met=met, xi_star=w_star)
    write_round_trace(out / "rounds.csv", trace)
    ratios, _ = lyapunov_ratios(game, graph, met, alpha, w_star, start, min(cfg["rounds"], 500))
    eta = float(ratios[10:].max())
    inv = invariance_check(game, state)
    return {"alpha": alpha, "eta": eta, "linear_decrease": eta < 1,
            "final_kkt_residual": trace[-1][5], "invariance_max": inv.max(),
            "invariance_ok": inv.max() <= 1e-9}


def run_synthetic_tracking(cfg, out):
    data = random_affine_data(cfg["n_agents"], cfg["n_local"], cfg["m"], cfg["q"],
                              cfg["seed"], cfg["coupling"])
    seq = drifting_sequence(data, cfg["b_rate"], cfg["phi_amp"], cfg["phi_period"], cfg["seed"])
    H = cfg.get("horizon", 200)
    sols = [affine_solution(seq(t)) for t in range(1, H + 1)]
    delta, delta_phi = measure_drift(seq, H, solutions=sols)
    g1 = seq(1)
    c = _declared_constants(cfg) or exact_constants(g1)
    met = build_metric(g1, c)
    alpha_full = default_step(met)
    rho = contraction_factor(met, alpha_full)
    graph = _comm_graph(cfg["graph"], g1.N, cfg["seed"])
    alpha = cfg.get("alpha") or tune_alpha(g1, met, graph, seed=cfg["seed"], xi_star=sols[0])
    eta = measure_eta(g1, graph, met, alpha, sols[0])
    _, ell_A = g1.constraint_spectrum
    tail = max(1, H // 5)
    summary = {"delta": delta, "delta_phi": delta_phi, "rho": rho, "eta": eta,
               "alpha_full": alpha_full, "alpha_distributed": alpha,
               "full": {}, "distributed": {}}
    for K in _as_list(cfg.get("K", [1, 5, 20])):
        bound = tracking_bound_full(met, rho, K, delta)
        _, errs = run_online_full(seq, H, np.zeros(g1.n + g1.n_dual), alpha_full, K, met, sols)
        write_csv(out / f"tracking_full_K{K}.csv", TRACKING_HEADER,
                  [(t + 1, e, None, bound, None) for t, e in enumerate(errs)])
        summary["full"][str(K)] = {"bound": bound, "tail_max": max(errs[-tail:]),
                                   "bound_ok": max(errs[-tail:]) <= bound}
        dbound = (tracking_bound_distributed(met, eta, K, delta, delta_phi, g1.N, ell_A)
                  if eta < 1 else None)
        state = online_distributed_init(g1, np.zeros(g1.n))
        rows, inv, psi_ok = [], 0.0, True
        psi_cap = delta_phi + g1.N * ell_A * delta
        prev = None
        for t in range(1, H + 1):
            game = seq(t)
            if prev is not None:
                psi_ok &= reinit_perturbation(prev, game, state) <= psi_cap * (1 + 1e-9)
            state = online_distributed_step(seq, t, graph, state, alpha, K)
            eP, eQ = tracking_errors(met, state, sols[t - 1])
            rows.append((t, eP, eQ, dbound, float(np.linalg.norm(game.A @ state.x - game.b))))
            inv = max(inv, invariance_check(game, state).max())
            prev = game
        write_csv(out / f"tracking_dist_K{K}.csv", TRACKING_HEADER, rows)
        tail_max = max(r[2] for r in rows[-tail:])
        summary["distributed"][str(K)] = {
            "bound": dbound, "tail_max": tail_max,
            "bound_ok": dbound is not None and tail_max <= dbound,
            "invariance_max": inv, "invariance_ok": inv <= 1e-9, "psi_bound_ok": bool(psi_ok),
        }
    return summary


def _as_list(v):
    return [int(e) for e in (v if isinstance(v, list) else [v])]


EXPERIMENTS = {
    "fig1-dayahead": Experiment(run_fig1, MARKET_KEYS,
                                "day-ahead P2P market, distributed convergence trace"),
    "fig2-realtime": Experiment(run_fig2, MARKET_KEYS,
                                "real-time P2P market, tracking error per K"),
    "fig3-violation": Experiment(run_fig3, MARKET_KEYS,
                                 "real-time P2P market, constraint violation per K"),
    "synthetic-full": Experiment(run_synthetic_full, AFFINE_KEYS,
                                 "affine game, full-information rate check"),
    "synthetic-distributed": Experiment(
        run_synthetic_distributed, {**AFFINE_KEYS, "graph": STR, "rounds": INT},
        "affine game, distributed Lyapunov decrease"),
    "synthetic-tracking": Experiment(
        run_synthetic_tracking,
        {**AFFINE_KEYS, "graph": STR, "horizon": INT, "K": INTS, "b_rate": FLOAT,
         "phi_amp": FLOAT, "phi_period": FLOAT},
        "drifting affine game, full and distributed tracking bounds"),
}


# -- config handling ------------------------------------------------------------


def load_config(path):
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ContractViolation("config must be a mapping of keys to values")
    return data


def validate_config(cfg):
    """Schema check; never runs an experiment."""
    errors, warnings = [], []
    name = cfg.get("experiment")
    if name is None:
        return ValidationReport(["missing: experiment"], [])
    if name not in EXPERIMENTS:
        return ValidationReport([f"unknown experiment '{name}'"], [])
    allowed = {**COMMON, **EXPERIMENTS[name].keys}
    for key in sorted(cfg):
        if key not in allowed:
            errors.append(f"unknown key: {key}")
        elif not _check_type(allowed[key], cfg[key]):
            errors.append(f"{key}: expected {allowed[key]}, got {cfg[key]!r}")
    if errors:
        return ValidationReport(errors, warnings)
    for key in ("n_agents", "horizon", "rounds", "max_iter", "n_local", "m", "q"):
        if key in cfg and cfg[key] < 1:
            errors.append(f"{key}: must be positive")
    if "K" in cfg and min(_as_list(cfg["K"])) < 1:
        errors.append("K: every entry must be a positive integer")
    for key in ("gamma", "kappa_tr", "tol", "alpha"):
        if key in cfg and cfg[key] <= 0:
            errors.append(f"{key}: must be positive")
    if cfg.get("graph", "ring") not in GRAPHS:
        errors.append(f"graph: must be one of {', '.join(GRAPHS)}")
    declared = [k for k in ("mu_F", "ell_F", "mu_A", "ell_A") if k in cfg]
    if declared and len(declared) < 4:
        errors.append("constants: declare all of mu_F, ell_F, mu_A, ell_A or none")
    if not errors and len(declared) == 4 and "alpha" in cfg:
        try:
            lo, hi = window_from_constants(_declared_constants(cfg))
        except (ContractViolation, ValueError) as exc:
            errors.append(f"constants: {exc}")
        else:
            if not lo < cfg["alpha"] < hi:
                warnings.append(f"alpha={cfg['alpha']} outside the admissible interval "
                                f"({lo:g}, {hi:g}) for the declared constants")
    return ValidationReport(errors, warnings)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(e) for k, e in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(e) for e in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else None
    return v


def run_experiment(cfg, out_dir):
    """Run a validated config; returns the summary written to ``summary.json``."""
    report = validate_config(cfg)
    if not report.ok:
        raise ContractViolation(str(report))
    full = {**DEFAULTS, **cfg}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = EXPERIMENTS[cfg["experiment"]].run(full, out)
    summary = _jsonable({"experiment": cfg["experiment"], "seed": full["seed"], **summary})
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def main(argv=None):
    parser = argparse.ArgumentParser(prog="vgne", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment named in a config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides out_dir)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_val = sub.add_parser("validate", help="check a config against the schema")
    p_val.add_argument("config")
    sub.add_parser("list-experiments", help="print the experiment registry")
    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for name, exp in EXPERIMENTS.items():
            print(f"{name:24s} {exp.description}")
        return 0
    try:
        cfg = load_config(args.config)
    except (OSError, yaml.YAMLError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        report = validate_config(cfg)
        print(report)
        return 0 if report.ok else 1
    if args.seed is not None:
        cfg["seed"] = args.seed
    report = validate_config(cfg)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = args.out or cfg.get("out_dir") or str(Path("out") / cfg["experiment"])
    try:
        summary = run_experiment(cfg, out)
    except (DivergenceError, InadmissibleStep, NotStronglyMonotone) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0
