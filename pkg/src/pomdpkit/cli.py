"""Config-driven scenario runner.

A config is a JSON object with keys ``scenario``, ``model``, ``params``,
``seed`` and ``out_dir``.  Every run writes its CSV/JSON artifacts plus a
``manifest.json`` listing each file's sha256.  Replication ``i`` draws from
``RngStream(seed, i)``, so results never depend on ``--threads``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigValidation, InputError, NumericalError, PomdpKitError, UnknownScenario
from .markov import RngStream

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_UNKNOWN = 0, 2, 3, 4

# -- schemas ---------------------------------------------------------------

_NUM = {"type": "number"}
_VEC = {"type": "array", "minItems": 1, "items": _NUM}
_MAT = {"type": "array", "minItems": 1, "items": _VEC}
_TENSOR3 = {"type": "array", "minItems": 1, "items": _MAT}
_POS_INT = {"type": "integer", "minimum": 1}
_REPS = {"type": "integer", "minimum": 1, "maximum": 10_000}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


TOP_SCHEMA = {
    "type": "object",
    "properties": {
        "scenario": {"type": "string"},
        "model": {"type": "object"},
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "out_dir": {"type": "string"},
    },
    "required": ["scenario", "model"],
    "additionalProperties": False,
}

MODEL_SCHEMAS = {
    "filter": _obj({"P": _MAT, "B": _MAT, "pi0": _VEC}, ["P", "B", "pi0"]),
    "sensitivity": _obj({"P": _MAT, "B": _MAT, "pi0": _VEC, "levels": _VEC}, ["P", "B", "pi0"]),
    "orders": _obj({
        "matrices": {"type": "object", "additionalProperties": _MAT},
        "pairs": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _VEC}},
        "pmfs": {"type": "array", "items": _VEC},
        "phase_type": _obj({"P": _MAT, "pi0": _VEC, "kmax": _POS_INT}, ["P", "pi0", "kmax"]),
    }),
    "social": _obj({"B": _MAT, "costs": _MAT, "prior": _VEC}, ["B", "costs", "prior"]),
    "detect": _obj({"B": _MAT, "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}, ["B", "p"]),
    "dp": {
        "oneOf": [
            _obj({"tiger": _obj({k: _NUM for k in ("p", "q", "alpha", "beta", "gamma")},
                                ["p", "q", "alpha", "beta", "gamma"])}, ["tiger"]),
            _obj({"P": _TENSOR3, "B": _TENSOR3, "c": _MAT, "discount": _NUM, "rewards": {"type": "boolean"}},
                 ["P", "B", "c"]),
        ]
    },
    "game": {
        "oneOf": [
            _obj({"kind": {"const": "matrix"}, "M": _MAT}, ["kind", "M"]),
            _obj({"kind": {"const": "static"}, "rewards": {"type": "array", "minItems": 1}}, ["kind", "rewards"]),
            _obj({"kind": {"const": "single_controller"}, "P": _TENSOR3, "c": _TENSOR3, "rho": _NUM, "alpha": _VEC},
                 ["kind", "P", "c", "rho"]),
        ]
    },
    "ruler": {
        "oneOf": [
            _obj({"kind": {"const": "bernoulli"}, "means": _VEC}, ["kind", "means"]),
            _obj({"kind": {"const": "gaussian"}, "means": _VEC, "sigma": _NUM, "alpha": _NUM, "beta": _NUM},
                 ["kind", "means", "sigma", "alpha", "beta"]),
        ]
    },
    "estimate": _obj({"P": _MAT, "g": _VEC, "sigma": _NUM, "pi0": _VEC}, ["P", "g", "sigma"]),
}

PARAM_SCHEMAS = {
    "filter": _obj({"n": _POS_INT, "replications": _REPS}),
    "sensitivity": _obj({"Pbar": _MAT, "n": _POS_INT, "replications": _REPS}, ["Pbar"]),
    "orders": _obj({}),
    "social": _obj({"theta": {"enum": [0, 1]}, "n": _POS_INT, "replications": _REPS,
                    "protocol": {"enum": ["vanilla", "limited"]}, "N": {"type": "integer", "minimum": 0}}),
    "detect": _obj({"threshold": {"type": "number", "minimum": 0}, "n": _POS_INT, "replications": _REPS,
                    "kind": {"enum": ["shiryaev", "shiryaev_roberts"]},
                    "dp": _obj({"L": _NUM, "C": _NUM, "grid": {"type": "integer", "minimum": 100}}, ["L", "C"])}),
    "dp": _obj({"horizon": _POS_INT, "resolution": _POS_INT,
                "interpolation": {"enum": ["auto", "linear", "nearest", "alpha"]},
                "stopping": {"type": "boolean"}}),
    "game": _obj({"eps": _NUM, "n": {"type": "integer", "minimum": 0}, "mu": _NUM,
                  "replications": _REPS, "every": _POS_INT}),
    "ruler": _obj({"n": _POS_INT, "antithetic": {"type": "boolean"}, "theta0": {"type": "integer", "minimum": 0},
                   "replications": _REPS, "every": _POS_INT}),
    "estimate": _obj({"algorithm": {"enum": ["recem", "rml", "rpe"]}, "eps": _NUM, "batch": _POS_INT,
                      "delta": _NUM, "info0": _NUM, "bounds": {**_VEC, "minItems": 2, "maxItems": 2},
                      "h": _NUM, "forgetting": {"type": "boolean"}, "n": _POS_INT, "g0": _VEC,
                      "replications": _REPS, "every": _POS_INT}),
}

SCENARIOS = tuple(MODEL_SCHEMAS)


def _validate(instance, schema, prefix=""):
    v = jsonschema.Draft202012Validator(schema)
    errors = sorted(v.iter_errors(instance), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        pointer = prefix + "".join(f"/{p}" for p in err.absolute_path)
        raise ConfigValidation(pointer or "/", err.message)


def validate_config(cfg) -> dict:
    """Check the config against the top-level and per-scenario schemas."""
    _validate(cfg, TOP_SCHEMA)
    name = cfg["scenario"]
    if name not in MODEL_SCHEMAS:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    _validate(cfg["model"], MODEL_SCHEMAS[name], "/model")
    _validate(cfg.get("params", {}), PARAM_SCHEMAS[name], "/params")
    return cfg


# -- output helpers ----------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def to_csv(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue().encode("ascii")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def to_json(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode("ascii")


def _replicate(fn, seed, count, threads):
    streams = [RngStream(seed, i) for i in range(count)]
    if threads <= 1 or count == 1:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, streams))


def _thin(rows, every):
    return (r for i, r in enumerate(rows) if (i + 1) % every == 0)


# -- scenarios -------------------------------------------------------------

def _scn_filter(model, params, seed, threads):
    from .hmm import HmmModel, run_filter
    m = HmmModel(model["P"], model["B"], model["pi0"])
    n = params.get("n", 100)

    def one(stream):
        xs, ys = m.simulate(n, stream)
        beliefs, _ = run_filter(m, ys)
        return xs, ys, beliefs

    cols = ("replication", "k", "x", "y") + tuple(f"belief_{i + 1}" for i in range(m.X))
    rows = []
    for r, (xs, ys, beliefs) in enumerate(_replicate(one, seed, params.get("replications", 1), threads)):
        for k in range(1, n + 1):
            rows.append((r, k, int(xs[k]), int(ys[k - 1]), *beliefs[k].tolist()))
    return {"beliefs.csv": to_csv(cols, rows)}


def _scn_sensitivity(model, params, seed, threads):
    from .hmm import HmmModel, run_sensitivity_experiment
    m = HmmModel(model["P"], model["B"], model["pi0"], model.get("levels"))
    n = params.get("n", 1000)
    reports = _replicate(lambda s: run_sensitivity_experiment(m, params["Pbar"], n, s), seed,
                         params.get("replications", 1), threads)
    cols = ("replication", "k", "observed_l1", "samplepath_bound", "A_value", "mu_value")
    rows = [(r, *row) for r, rep in enumerate(reports) for row in rep.rows()]
    summary = {
        "epsilon": reports[0].epsilon,
        "violations": int(sum(int(np.sum(rep.observed_l1 > rep.samplepath_bound)) for rep in reports)),
        "max_observed": max(float(rep.observed_l1.max()) for rep in reports),
        "max_bound": max(float(rep.samplepath_bound.max()) for rep in reports),
    }
    return {"sensitivity.csv": to_csv(cols, rows), "summary.json": to_json(summary)}


def _verdict(v):
    return {"holds": v.holds, "witness": list(v.witness) if v.witness is not None else None}


def _scn_orders(model, params, seed, threads):
    from .detect import PhaseType, phase_type_pmf
    from .orders import fosd_dominates, is_ihr, is_tp2, mlr_dominates
    out = {"matrices": {}, "pairs": [], "pmfs": []}
    for name in sorted(model.get("matrices", {})):
        M = np.asarray(model["matrices"][name], dtype=float)
        rows = [_verdict(mlr_dominates(M[i + 1], M[i])) for i in range(len(M) - 1)]
        out["matrices"][name] = {"tp2": _verdict(is_tp2(M)), "rows_mlr_increasing": rows}
    for p, q in model.get("pairs", []):
        out["pairs"].append({"mlr": _verdict(mlr_dominates(p, q)), "fosd": _verdict(fosd_dominates(p, q))})
    for pmf in model.get("pmfs", []):
        out["pmfs"].append({"ihr": _verdict(is_ihr(pmf))})
    if "phase_type" in model:
        ph = model["phase_type"]
        nu, tail = phase_type_pmf(PhaseType(ph["pi0"], ph["P"]), ph["kmax"])
        out["phase_type"] = {"pmf": nu, "tail": tail, "ihr": _verdict(is_ihr(nu, tail)),
                             "tp2": _verdict(is_tp2(ph["P"]))}
    return {"orders.json": to_json(out)}


def _scn_social(model, params, seed, threads):
    from .social import SocialModel, limited_memory_run, social_learning_run
    m = SocialModel(model["B"], model["costs"], model["prior"])
    theta, n = params.get("theta", 0), params.get("n", 100)
    reps = params.get("replications", 1)
    if params.get("protocol", "vanilla") == "limited":
        N = params.get("N", 1)
        acts = _replicate(lambda s: limited_memory_run(m, N, theta, n, s), seed, reps, threads)
        rows = [(r, t + 1, int(a[t])) for r, a in enumerate(acts) for t in range(n)]
        return {"actions.csv": to_csv(("replication", "t", "action"), rows)}
    runs = _replicate(lambda s: social_learning_run(m, theta, n, s), seed, reps, threads)
    rows = [(r, *row) for r, run in enumerate(runs) for row in run]
    return {"trace.csv": to_csv(("replication", "t", "y", "action", "belief_1", "belief_2"), rows)}


def _scn_detect(model, params, seed, threads):
    from .detect import DetectorState, change_model, detector_trace, sequential_detection_dp
    from .hmm import HmmModel
    p = model["p"]
    P, pi0 = change_model(p)
    hm = HmmModel(P, model["B"], pi0)
    kind = params.get("kind", "shiryaev")
    threshold = params.get("threshold", 100.0)
    n = params.get("n", 200)

    def one(stream):
        xs, ys = hm.simulate(n, stream)
        trace = detector_trace(ys, DetectorState(0.0, kind, p), model["B"], threshold)
        changed = np.nonzero(xs == 0)[0]
        return trace, int(changed[0]) if changed.size else None

    results = _replicate(one, seed, params.get("replications", 1), threads)
    rows = [(r, *row) for r, (trace, _) in enumerate(results) for row in trace]
    summary = {"runs": [{"change_time": ct, "alarm_time": tr[-1][0] if tr and tr[-1][3] else None}
                        for tr, ct in results]}
    files = {"detection.csv": to_csv(("replication", "k", "y", "statistic", "stopped"), rows)}
    if "dp" in params:
        d = params["dp"]
        res = sequential_detection_dp(d["L"], d["C"], model["B"], d.get("grid", 1001))
        files["dp.csv"] = to_csv(("grid", "V", "action"), zip(res.grid, res.V, res.action))
        summary["dp"] = {"lower": res.lower, "upper": res.upper, "sweeps": res.sweeps,
                         "continue_is_interval": res.continue_is_interval()}
    files["summary.json"] = to_json(summary)
    return files


def _scn_dp(model, params, seed, threads):
    from .belief_dp import PomdpModel, stopping_set_analysis, tiger_model, value_iteration_grid
    if "tiger" in model:
        t = model["tiger"]
        m = tiger_model(t["p"], t["q"], t["alpha"], t["beta"], t["gamma"])
    else:
        m = PomdpModel(model["P"], model["B"], model["c"], model.get("discount", 1.0), model.get("rewards", False))
    horizon, res = params.get("horizon", 5), params.get("resolution", 101)
    vals = value_iteration_grid(m, horizon, res, params.get("interpolation", "auto"))
    grid = vals[0].grid
    cols = tuple(f"pi_{i + 1}" for i in range(m.X)) + ("n", "value", "action")
    rows = [(*grid.points[g].tolist(), v.n, m.sign * v.values[g], int(v.policy[g]))
            for v in vals[1:] for g in range(len(grid))]
    files = {"value.csv": to_csv(cols, rows)}
    if params.get("stopping", False):
        sa = stopping_set_analysis(m, horizon, res)
        files["stopping.json"] = to_json({
            "nested": sa.nested, "convex": sa.convex, "explicit_inside": sa.explicit_inside,
            "inside_explicit": sa.inside_explicit,
            "closure_holds": sa.closure_holds, "matches_explicit": sa.matches_explicit,
            "stop_set_sizes": [int(s.sum()) for s in sa.stop_sets],
        })
    return files


def _scn_game(model, params, seed, threads):
    from . import games
    kind = model["kind"]
    if kind == "matrix":
        value, x, y = games.matrix_game_value(model["M"])
        return {"value.json": to_json({"value": value, "x": x, "y": y})}
    if kind == "single_controller":
        g = games.SingleControllerGame(model["P"], model["c"], model["rho"], model.get("alpha"))
        sol = games.single_controller_solve(g)
        gap1, gap2 = games.saddle_gaps(g, sol)
        return {"solution.json": to_json({
            "V": sol.V, "q": sol.q, "p": sol.p, "primal_objective": sol.primal_objective,
            "dual_objective": sol.dual_objective, "degenerate_states": list(sol.degenerate_states),
            "player1_improvement": gap1, "player2_improvement": gap2,
        })}
    rewards = np.asarray(model["rewards"], dtype=float)
    ce = games.correlated_eq_find(rewards)
    files = {}
    summary = {"correlated_equilibrium": ce, "ce_violation": games.ce_violation(ce, rewards)}
    n = params.get("n", 0)
    if n > 0:
        eps, every = params.get("eps", 0.01), params.get("every", 1)
        traces = _replicate(lambda s: games.regret_matching_run(rewards, eps, n, s, params.get("mu")),
                            seed, params.get("replications", 1), threads)
        rows = [(r, *row) for r, tr in enumerate(traces) for row in _thin(tr.rows(), every)]
        files["regret.csv"] = to_csv(("replication",) + games.RegretTrace.columns, rows)
        summary["final"] = [{"max_regret": tr.max_regret[-1], "ce_violation": tr.ce_violation[-1], "z": tr.z}
                            for tr in traces]
    files["ce.json"] = to_json(summary)
    return files


def _scn_ruler(model, params, seed, threads):
    from .ruler import bernoulli_objective, gaussian_objective, search_ruler_run
    if model["kind"] == "bernoulli":
        obj = bernoulli_objective(model["means"])
    else:
        obj = gaussian_objective(model["means"], model["sigma"], model["alpha"], model["beta"])
    n, every = params.get("n", 10_000), params.get("every", 1)
    traces = _replicate(lambda s: search_ruler_run(obj, n, s, params.get("antithetic", False),
                                                   params.get("theta0", 0)),
                        seed, params.get("replications", 1), threads)
    rows = [(r, *row) for r, tr in enumerate(traces) for row in _thin(tr.rows(), every)]
    summary = {"runs": [{"theta_hat": tr.theta_hat, "visits": tr.visits, "clamped": tr.clamped} for tr in traces]}
    return {"trace.csv": to_csv(("replication",) + tuple(traces[0].columns), rows), "summary.json": to_json(summary)}


def _scn_estimate(model, params, seed, threads):
    from .online import EstimatorConfig, GaussianLevelsHmm, run_estimation
    m = GaussianLevelsHmm(model["P"], model["g"], model["sigma"], model.get("pi0"))
    keys = ("algorithm", "eps", "batch", "delta", "info0", "h", "forgetting")
    cfg = EstimatorConfig(**{k: params[k] for k in keys if k in params},
                          **({"bounds": tuple(params["bounds"])} if "bounds" in params else {}))
    n, every = params.get("n", 10_000), params.get("every", 1)
    results = _replicate(lambda s: run_estimation(m, cfg, n, s, params.get("g0")), seed,
                         params.get("replications", 1), threads)
    rows = [(r, *row) for r, res in enumerate(results) for row in _thin(res.rows(), every)]
    summary = {"runs": [{"final": res.final, "sorted_error": res.final_error, "floors": res.floors}
                        for res in results]}
    return {"trajectory.csv": to_csv(("replication",) + results[0].columns(), rows),
            "summary.json": to_json(summary)}


RUNNERS = {
    "filter": _scn_filter, "sensitivity": _scn_sensitivity, "orders": _scn_orders, "social": _scn_social,
    "detect": _scn_detect, "dp": _scn_dp, "game": _scn_game, "ruler": _scn_ruler, "estimate": _scn_estimate,
}


# -- driver ----------------------------------------------------------------

def bundled_scenarios():
    return sorted(p.name[:-5] for p in resources.files("pomdpkit").joinpath("scenarios").iterdir()
                  if p.name.endswith(".json"))


def load_bundled(name: str) -> dict:
    path = resources.files("pomdpkit").joinpath("scenarios", f"{name}.json")
    if not path.is_file():
        raise UnknownScenario(f"no bundled scenario {name!r}; available: {', '.join(bundled_scenarios())}")
    return json.loads(path.read_text())


def run_scenario(cfg: dict, out_dir=None, seed=None, threads: int = 1) -> dict:
    """Validate ``cfg``, run it and write artifacts.  Returns the manifest."""
    cfg = dict(cfg)
    if seed is not None:
        cfg["seed"] = seed
    validate_config(cfg)
    seed = cfg.get("seed", 0)
    out = Path(out_dir if out_dir is not None else cfg.get("out_dir", "out"))
    name = cfg["scenario"]
    try:
        files = RUNNERS[name](cfg["model"], cfg.get("params", {}), seed, max(1, int(threads)))
    except PomdpKitError as exc:
        exc.args = (f"scenario {name!r}: {exc}",)
        raise
    resolved = {k: v for k, v in cfg.items() if k != "out_dir"}
    resolved["seed"] = seed
    files["config.json"] = to_json(resolved)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for fname in sorted(files):
        data = files[fname]
        (out / fname).write_bytes(data)
        entries.append({"path": fname, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    manifest = {"scenario": name, "seed": seed, "version": __version__, "files": entries}
    (out / "manifest.json").write_bytes(to_json(manifest))
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pomdpkit", description="Run a POMDP toolkit scenario from a JSON config.")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="path to a JSON scenario config")
    src.add_argument("--scenario", help="name of a bundled scenario config")
    src.add_argument("--list-scenarios", action="store_true", help="list bundled scenarios and exit")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", type=Path, help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for replications (wall time only)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_scenarios:
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    try:
        if args.config is not None:
            try:
                cfg = json.loads(args.config.read_text())
            except OSError as exc:
                raise ConfigValidation("/", f"cannot read config: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigValidation("/", f"invalid JSON: {exc}") from exc
        elif args.scenario is not None:
            cfg = load_bundled(args.scenario)
        else:
            raise ConfigValidation("/", "one of --config or --scenario is required")
        manifest = run_scenario(cfg, args.out, args.seed, args.threads)
    except UnknownScenario as exc:
        print(f"pomdpkit: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except InputError as exc:
        print(f"pomdpkit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"pomdpkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in manifest["files"]:
        print(f"{f['sha256']}  {f['path']}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
