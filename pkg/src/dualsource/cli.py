"""Command-line front end tying the modules into reproducible experiments.

Every command reads a schema-validated JSON config (unknown keys are
rejected at every nesting level), takes flag overrides for seed and output
directory, and writes deterministic artifacts: summary.json plus CSVs and
network files. Exit codes: 0 success, 2 config error, 3 numeric failure.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from .demand import (
    DiscreteUniform,
    Empirical,
    Rng,
    TruncatedNormalProcess,
    ingest_empirical,
    read_demand_csv,
    synthetic_lifecycle,
)
from .dp import PolicyTable, StateSpace, policy_csv_rows, value_iteration
from .dynamics import CostParams, SingleParams
from .evaluation import (
    evaluate,
    policy_kind,
    project_policy,
    projection_csv_rows,
    report_csv_rows,
    report_summary,
    wilcoxon_signed_rank,
)
from .heuristics import (
    cdi_time_varying_params,
    optimize_base_stock,
    optimize_cdi,
    optimize_di,
    optimize_si,
    policy_from_json,
    policy_to_json,
)
from .nnc.network import (
    empirical_architecture,
    init_weights,
    load,
    make_network,
    save,
    synthetic_architecture,
)
from .nnc.training import TrainingConfig, train, train_empirical

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

LOCK_NAME = ".dualsource.lock"


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- schema

def _check_keys(node, path, required=(), optional=()):
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(node) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(unknown)}")
    missing = sorted(set(required) - set(node))
    if missing:
        raise ConfigError(f"{path}: missing required key(s): {', '.join(missing)}")


def _num(node, key, path, default=None):
    if key not in node:
        if default is None:
            raise ConfigError(f"{path}.{key}: required number")
        return default
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    return v


def _int(node, key, path, default=None):
    v = _num(node, key, path, default)
    if v != int(v):
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    return int(v)


def _bool(node, key, path, default=False):
    v = node.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}: expected true/false, got {v!r}")
    return v


def _str(node, key, path, default=None):
    if key not in node:
        if default is None:
            raise ConfigError(f"{path}.{key}: required string")
        return default
    v = node[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key}: expected a string, got {v!r}")
    return v


def _parse_instance(node, path="instance"):
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected an object")
    if "l" in node:
        _check_keys(node, path, required=("h", "b", "c", "l"))
        return SingleParams(
            h=_num(node, "h", path), b=_num(node, "b", path),
            c=_num(node, "c", path), l=_int(node, "l", path),
        )
    _check_keys(
        node, path, required=("h", "b", "c_r", "c_e", "l_r", "l_e"),
        optional=("f_r", "f_e"),
    )
    return CostParams(
        h=_num(node, "h", path), b=_num(node, "b", path),
        c_r=_num(node, "c_r", path), c_e=_num(node, "c_e", path),
        f_r=_num(node, "f_r", path, 0.0), f_e=_num(node, "f_e", path, 0.0),
        l_r=_int(node, "l_r", path), l_e=_int(node, "l_e", path),
    )


def _parse_demand(node, path="demand"):
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = _str(node, "kind", path)
    if kind == "uniform":
        _check_keys(node, path, required=("kind", "lo", "hi"))
        return DiscreteUniform(_int(node, "lo", path), _int(node, "hi", path))
    if kind == "empirical":
        _check_keys(node, path, required=("kind", "pmf"))
        pmf = node["pmf"]
        if not isinstance(pmf, list) or not all(
            isinstance(p, list) and len(p) == 2 for p in pmf
        ):
            raise ConfigError(f"{path}.pmf: expected a list of [value, prob] pairs")
        return Empirical(tuple((int(v), float(p)) for v, p in pmf))
    if kind == "lifecycle":
        _check_keys(
            node, path, required=("kind",),
            optional=("horizon", "peak", "peak_week", "sigma_frac"),
        )
        return synthetic_lifecycle(
            horizon=_int(node, "horizon", path, 115),
            peak=_num(node, "peak", path, 3e5),
            peak_week=_num(node, "peak_week", path, 70),
            sigma_frac=_num(node, "sigma_frac", path, 0.25),
        )
    if kind == "process":
        if "path" in node:
            _check_keys(node, path, required=("kind", "path"))
            return _load_process(node["path"])
        _check_keys(
            node, path, required=("kind", "mu", "sigma"),
            optional=("trunc_lo", "trunc_hi"),
        )
        return TruncatedNormalProcess(
            mu=tuple(float(x) for x in node["mu"]),
            sigma=tuple(float(x) for x in node["sigma"]),
            trunc_lo=_num(node, "trunc_lo", path, 0.0),
            trunc_hi=_num(node, "trunc_hi", path, 1e8),
        )
    raise ConfigError(f"{path}.kind: unknown demand kind {kind!r}")


def _load_process(path):
    doc = _read_json_file(path, "demand process")
    _check_keys(doc, path, required=("mu", "sigma", "trunc_lo", "trunc_hi"))
    return TruncatedNormalProcess(
        mu=tuple(float(x) for x in doc["mu"]),
        sigma=tuple(float(x) for x in doc["sigma"]),
        trunc_lo=float(doc["trunc_lo"]), trunc_hi=float(doc["trunc_hi"]),
    )


def _read_json_file(path, what):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path!r}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path!r} is not valid JSON: {exc}") from exc


# ------------------------------------------------------------- artifacts

def _write_json(out_dir, name, doc):
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")
    return path


def _write_csv(out_dir, name, header, rows):
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")
    return path


def _instance_doc(params):
    if isinstance(params, SingleParams):
        return {"h": params.h, "b": params.b, "c": params.c, "l": params.l}
    return {
        "h": params.h, "b": params.b, "c_r": params.c_r, "c_e": params.c_e,
        "f_r": params.f_r, "f_e": params.f_e, "l_r": params.l_r, "l_e": params.l_e,
    }


# --------------------------------------------------------------- policies

def _policy_file_to_object(path):
    doc = _read_json_file(path, "policy")
    if isinstance(doc, dict) and "layers" in doc:
        with open(path, "rb") as fh:
            return load(fh.read())
    if isinstance(doc, dict) and doc.get("kind") == "table":
        _check_keys(
            doc, path, required=("kind", "space", "q_r", "q_e", "recurrent")
        )
        _check_keys(doc["space"], f"{path}.space", required=("lo", "hi", "q_max", "l"))
        space = StateSpace(**{k: int(v) for k, v in doc["space"].items()})
        return PolicyTable(
            space=space,
            q_r=np.asarray(doc["q_r"], dtype=np.int64),
            q_e=np.asarray(doc["q_e"], dtype=np.int64),
            recurrent=np.asarray(doc["recurrent"], dtype=bool),
        )
    if isinstance(doc, dict) and "kind" in doc:
        return policy_from_json(json.dumps(doc))
    raise ConfigError(f"policy file {path!r}: unrecognized format")


def _table_policy_doc(policy):
    return {
        "kind": "table",
        "space": {
            "lo": policy.space.lo, "hi": policy.space.hi,
            "q_max": policy.space.q_max, "l": policy.space.l,
        },
        "q_r": [int(q) for q in policy.q_r],
        "q_e": [int(q) for q in policy.q_e],
        "recurrent": [bool(r) for r in policy.recurrent],
    }


_OPTIMIZERS = {
    "base_stock": optimize_base_stock,
    "si": optimize_si,
    "di": optimize_di,
    "cdi": optimize_cdi,
}


def _resolve_policy(node, path, params, model, seed):
    """Policy spec: a file reference, an inline heuristic, or an optimizer."""
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected an object")
    if "path" in node:
        _check_keys(node, path, required=("path",))
        return _policy_file_to_object(node["path"])
    if "optimize" in node:
        _check_keys(
            node, path, required=("optimize",),
            optional=("horizon", "n_reps", "window"),
        )
        method = node["optimize"]
        if method not in _OPTIMIZERS:
            raise ConfigError(
                f"{path}.optimize: unknown method {method!r} "
                f"(choose from {sorted(_OPTIMIZERS)})"
            )
        if method == "base_stock":
            return optimize_base_stock(params, model)
        kwargs = {"seed": seed}
        if "horizon" in node:
            kwargs["horizon"] = _int(node, "horizon", path)
        if "n_reps" in node:
            kwargs["n_reps"] = _int(node, "n_reps", path)
        if "window" in node and method == "cdi":
            kwargs["window"] = _int(node, "window", path)
        return _OPTIMIZERS[method](params, model, **kwargs)
    if node.get("kind") == "cdi_time_varying":
        _check_keys(node, path, required=("kind", "variant"))
        if not isinstance(model, TruncatedNormalProcess):
            raise ConfigError(f"{path}: cdi_time_varying needs a demand process")
        return cdi_time_varying_params(model, params, _str(node, "variant", path))
    if "kind" in node:
        try:
            return policy_from_json(json.dumps(node))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}: expected 'path', 'kind', or 'optimize'")


# ---------------------------------------------------------------- dp

DP_KEYS = ("eps", "max_iter", "margin", "q_max")


def cmd_dp(cfg, out_dir):
    params = _parse_instance(cfg["instance"])
    model = _parse_demand(cfg["demand"])
    if isinstance(params, SingleParams):
        raise ConfigError("dp: expected a dual-sourcing instance")
    if params.c_r != 0 or params.l_e != 0:
        raise ConfigError(
            "dp: out of scope - exact solver requires c_r = 0 and l_e = 0"
        )
    if not 1 <= params.l_r <= 4:
        raise ConfigError(
            f"dp: out of scope - lead time l_r={params.l_r} not in 1..4 "
            "(state space grows exponentially)"
        )
    node = cfg.get("dp", {})
    _check_keys(node, "dp", optional=DP_KEYS)
    space = None
    if "margin" in node or "q_max" in node:
        space = StateSpace.for_instance(
            params, model, margin=_int(node, "margin", "dp", 5),
            q_max=node.get("q_max"),
        )
    lam, values, policy = value_iteration(
        params, model, space=space,
        eps=_num(node, "eps", "dp", 1e-6),
        max_iter=_int(node, "max_iter", "dp", 1_000_000),
    )
    header, rows = policy_csv_rows(policy, values)
    _write_csv(out_dir, "policy.csv", header, rows)
    _write_json(out_dir, "policy.json", _table_policy_doc(policy))
    print(f"lambda_star = {lam:.6f}")
    return {
        "lambda_star": lam,
        "n_states": policy.space.n_states,
        "n_recurrent": int(np.count_nonzero(policy.recurrent)),
        "value_iteration_sweeps": values.k,
    }


# ---------------------------------------------------------------- train

TRAIN_KEYS = (
    "preset", "dims", "activations", "input_scale", "out_scale", "alpha",
    "T", "M", "epochs", "eta", "eta_init_inv", "gamma",
    "eta_drop_epoch", "eta_drop_factor", "init_seed", "warm_start",
    "two_phase", "eval",
)
TWO_PHASE_KEYS = ("phase1_epochs", "phase2_epochs", "eta_phase2", "loss_threshold")


def _build_architecture(node, params, model):
    preset = _str(node, "preset", "train", "custom")
    if preset == "synthetic":
        if isinstance(params, SingleParams):
            raise ConfigError("train: preset 'synthetic' expects a dual instance")
        return synthetic_architecture(1 + params.l_r + params.l_e)
    if preset == "empirical":
        if isinstance(params, SingleParams) or not isinstance(
            model, TruncatedNormalProcess
        ):
            raise ConfigError(
                "train: preset 'empirical' expects a dual instance and a demand process"
            )
        return empirical_architecture(
            params.l_r + 2,
            input_scale=_num(node, "input_scale", "train"),
            out_scale=_num(node, "out_scale", "train"),
        )
    if preset != "custom":
        raise ConfigError(f"train.preset: unknown preset {preset!r}")
    if "dims" not in node:
        raise ConfigError("train: preset 'custom' requires dims")
    dims = node["dims"]
    if not isinstance(dims, list) or len(dims) < 2:
        raise ConfigError("train.dims: expected a list of at least 2 layer sizes")
    acts = node.get("activations")
    if acts is not None and (
        not isinstance(acts, list)
        or len(acts) != len(dims) - 1
        or not all(isinstance(a, str) for a in acts)
    ):
        raise ConfigError(
            "train.activations: expected one activation name per layer "
            f"({len(dims) - 1} entries)"
        )
    try:
        return make_network(
            tuple(int(d) for d in dims),
            activations=acts,
            alpha=_num(node, "alpha", "train", 1.0),
            input_scale=_num(node, "input_scale", "train", 1.0),
            out_scale=_num(node, "out_scale", "train", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc


def cmd_train(cfg, out_dir, warm_start=None):
    params = _parse_instance(cfg["instance"])
    model = _parse_demand(cfg["demand"])
    node = cfg.get("train")
    if node is None:
        raise ConfigError("train: missing 'train' section")
    _check_keys(node, "train", required=("T", "M", "epochs"), optional=TRAIN_KEYS)

    warm_start = warm_start or node.get("warm_start")
    if warm_start:
        net0 = _policy_file_to_object(warm_start)
        if policy_kind(net0) != "network":
            raise ConfigError(f"train: warm start file {warm_start!r} is not a network")
    else:
        arch = _build_architecture(node, params, model)
        net0 = init_weights(arch, Rng(_int(node, "init_seed", "train", 0)))

    tcfg = TrainingConfig(
        T=_int(node, "T", "train"), M=_int(node, "M", "train"),
        gamma=_num(node, "gamma", "train", 1.0),
        eta=_num(node, "eta", "train", 3e-3),
        eta_init_inv=_num(node, "eta_init_inv", "train", 1e-1),
        max_epochs=_int(node, "epochs", "train"),
        seed=cfg["seed"],
        eta_drop_epoch=(
            _int(node, "eta_drop_epoch", "train") if "eta_drop_epoch" in node else None
        ),
        eta_drop_factor=_num(node, "eta_drop_factor", "train", 10.0),
    )
    two_phase = node.get("two_phase")
    if two_phase is not None:
        _check_keys(two_phase, "train.two_phase", optional=TWO_PHASE_KEYS)
        if not isinstance(model, TruncatedNormalProcess):
            raise ConfigError("train.two_phase: requires a demand process")
        result = train_empirical(
            model, params, net0, tcfg,
            phase1_epochs=(
                _int(two_phase, "phase1_epochs", "train.two_phase")
                if "phase1_epochs" in two_phase else None
            ),
            phase2_epochs=(
                _int(two_phase, "phase2_epochs", "train.two_phase")
                if "phase2_epochs" in two_phase else None
            ),
            eta_phase2=_num(two_phase, "eta_phase2", "train.two_phase", 2e-4),
            loss_threshold=(
                _num(two_phase, "loss_threshold", "train.two_phase")
                if "loss_threshold" in two_phase else None
            ),
        )
    else:
        result = train(params, model, net0, tcfg)

    with open(os.path.join(out_dir, "network.json"), "wb") as fh:
        fh.write(save(result.best_net))
    print(f"wrote {os.path.join(out_dir, 'network.json')}")
    _write_csv(
        out_dir, "loss_curve.csv", ["epoch", "loss"],
        [[i, repr(float(v))] for i, v in enumerate(result.history)],
    )
    summary = {
        "best_loss": result.best_loss,
        "final_loss": result.history[-1],
        "epochs_run": len(result.history),
        "best_epoch": int(np.argmin(result.history)),
    }
    print(f"best_loss = {result.best_loss:.6f}")

    eval_node = node.get("eval")
    if eval_node is not None:
        _check_keys(eval_node, "train.eval", optional=("n_reps", "horizon"))
        rep = evaluate(
            result.best_net, params, model,
            n_reps=_int(eval_node, "n_reps", "train.eval", 500),
            horizon=_int(eval_node, "horizon", "train.eval", 1000),
            seed=cfg["seed"],
        )
        summary["eval"] = report_summary(rep)
        print(f"eval mean cost = {rep.mean:.6f}")
    return summary


# ---------------------------------------------------------------- eval

EVAL_KEYS = (
    "policy", "n_reps", "horizon", "compare", "project",
    "project_periods", "burn_in", "lanes",
)


def cmd_eval(cfg, out_dir, compare_path=None, project_flag=False):
    params = _parse_instance(cfg["instance"])
    model = _parse_demand(cfg["demand"])
    node = cfg.get("eval")
    if node is None:
        raise ConfigError("eval: missing 'eval' section")
    _check_keys(node, "eval", required=("policy",), optional=EVAL_KEYS)
    seed = cfg["seed"]

    policy = _resolve_policy(node["policy"], "eval.policy", params, model, seed)
    n_reps = _int(node, "n_reps", "eval", 500)
    horizon = _int(node, "horizon", "eval", 1000)
    rep = evaluate(policy, params, model, n_reps=n_reps, horizon=horizon, seed=seed)
    header, rows = report_csv_rows(rep)
    _write_csv(out_dir, "costs.csv", header, rows)
    summary = {"policy": report_summary(rep)}
    print(f"mean cost = {rep.mean:.6f} (se {rep.se:.6f})")

    compare_node = node.get("compare")
    if compare_path is not None:
        compare_node = {"path": compare_path}
    if compare_node is not None:
        baseline = _resolve_policy(compare_node, "eval.compare", params, model, seed)
        rep_b = evaluate(
            baseline, params, model, n_reps=n_reps, horizon=horizon, seed=seed
        )
        if rep_b.demand_sha256 != rep.demand_sha256:
            raise RuntimeError("paired comparison lost demand alignment")
        diffs = np.asarray(rep_b.costs) - np.asarray(rep.costs)
        try:
            p_value = wilcoxon_signed_rank(diffs)
        except ValueError:
            p_value = None
        cdf_rows = []
        for label, r in (("policy", rep), ("baseline", rep_b)):
            xs, fs = r.cdf_points()
            cdf_rows += [[label, repr(float(x)), repr(float(f))] for x, f in zip(xs, fs)]
        _write_csv(out_dir, "cdf.csv", ["policy", "cost", "cdf"], cdf_rows)
        _write_csv(
            out_dir, "paired_diffs.csv", ["realization", "baseline_minus_policy"],
            [[i, repr(float(d))] for i, d in enumerate(diffs)],
        )
        summary["baseline"] = report_summary(rep_b)
        summary["comparison"] = {
            "mean_diff": float(diffs.mean()),
            "median_diff": float(np.median(diffs)),
            "win_rate": float(np.mean(diffs > 0)),
            "wilcoxon_p_one_sided": p_value,
        }
        if p_value is not None:
            print(f"wilcoxon one-sided p = {p_value:.3e}")

    if project_flag or _bool(node, "project", "eval"):
        table = project_policy(
            policy, params, model,
            periods=_int(node, "project_periods", "eval", 1_000_000),
            burn_in=_int(node, "burn_in", "eval", 1_000),
            lanes=_int(node, "lanes", "eval", 100),
            seed=seed,
        )
        header, rows = projection_csv_rows(table)
        _write_csv(out_dir, "projection.csv", header, rows)
        summary["projection"] = {
            "n_states": len(table.rows), "periods": table.periods,
        }
    return summary


# ---------------------------------------------------------------- sweep

SWEEP_KEYS = (
    "table", "l_r", "c_e", "b", "demand_hi", "methods",
    "n_reps", "horizon", "dp", "dry_run", "resume",
)

# h, c_r, (f_r, f_e), and for low service the fixed b, per published table
SWEEP_TABLES = {
    "costs": {"h": 5, "c_r": 0, "f_r": 0, "f_e": 0, "b": (95, 495)},
    "fixed_costs": {"h": 5, "c_r": 0, "f_r": 5, "f_e": 10, "b": (95, 495)},
    "low_service": {"h": 15, "c_r": 0, "f_r": 0, "f_e": 0, "b": (85,)},
}


def _sweep_rows(node):
    table = _str(node, "table", "sweep", "costs")
    if table not in SWEEP_TABLES:
        raise ConfigError(
            f"sweep.table: unknown table {table!r} (choose from {sorted(SWEEP_TABLES)})"
        )
    base = SWEEP_TABLES[table]
    l_rs = node.get("l_r", [2])
    c_es = node.get("c_e", [5, 10, 20])
    bs = node.get("b", list(base["b"]))
    his = node.get("demand_hi", [4])
    for key, vals in (("l_r", l_rs), ("c_e", c_es), ("b", bs), ("demand_hi", his)):
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"sweep.{key}: expected a non-empty list")
    bad_b = sorted(set(bs) - set(base["b"]))
    if bad_b:
        raise ConfigError(
            f"sweep.b: {bad_b} not part of table {table!r} (allowed: {list(base['b'])})"
        )
    rows = []
    for l_r in l_rs:
        for hi in his:
            for c_e in c_es:
                for b in bs:
                    params = CostParams(
                        h=base["h"], b=b, c_r=base["c_r"], c_e=c_e,
                        f_r=base["f_r"], f_e=base["f_e"], l_r=int(l_r), l_e=0,
                    )
                    rows.append((params, DiscreteUniform(0, int(hi))))
    return table, rows


def _row_tag(params, model):
    return f"lr{params.l_r}_ce{params.c_e:g}_b{params.b:g}_u0-{int(model.hi)}"


def cmd_sweep(cfg, out_dir, dry_run=False, resume=False):
    node = cfg.get("sweep", {})
    _check_keys(node, "sweep", optional=SWEEP_KEYS)
    table, rows = _sweep_rows(node)
    methods = node.get("methods", ["dp"])
    if not isinstance(methods, list) or not set(methods) <= {"dp", "cdi"}:
        raise ConfigError("sweep.methods: expected a list drawn from ['dp', 'cdi']")
    dry_run = dry_run or _bool(node, "dry_run", "sweep")
    resume = resume or _bool(node, "resume", "sweep")

    planned = [_row_tag(p, m) for p, m in rows]
    if dry_run:
        for tag in planned:
            print(f"planned: {tag}")
        return {"table": table, "planned": planned, "dry_run": True}

    dp_node = node.get("dp", {})
    _check_keys(dp_node, "sweep.dp", optional=("eps", "max_iter"))
    n_reps = _int(node, "n_reps", "sweep", 500)
    horizon = _int(node, "horizon", "sweep", 1000)
    results = []
    for (params, model), tag in zip(rows, planned):
        row_path = os.path.join(out_dir, f"row_{tag}.json")
        if resume and os.path.exists(row_path):
            with open(row_path, "r", encoding="utf-8") as fh:
                results.append(json.load(fh))
            print(f"skipped {tag} (already done)")
            continue
        entry = {
            "tag": tag, "instance": _instance_doc(params),
            "demand": {"kind": "uniform", "lo": 0, "hi": int(model.hi)},
        }
        if "dp" in methods:
            lam, _, _ = value_iteration(
                params, model,
                eps=_num(dp_node, "eps", "sweep.dp", 1e-6),
                max_iter=_int(dp_node, "max_iter", "sweep.dp", 1_000_000),
            )
            entry["dp_cost"] = lam
            print(f"{tag}: dp {lam:.4f}")
        if "cdi" in methods:
            policy = optimize_cdi(params, model, seed=cfg["seed"])
            rep = evaluate(
                policy, params, model, n_reps=n_reps, horizon=horizon,
                seed=cfg["seed"],
            )
            entry["cdi_cost"] = rep.mean
            entry["cdi_se"] = rep.se
            entry["cdi_levels"] = json.loads(policy_to_json(policy))
            print(f"{tag}: cdi {rep.mean:.4f}")
        with open(row_path, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, indent=2, sort_keys=True)
            fh.write("\n")
        results.append(entry)

    cols = ["tag", "l_r", "c_e", "b", "demand_hi"]
    value_cols = [m + "_cost" for m in ("dp", "cdi") if m in methods]
    csv_rows = [
        [
            r["tag"], r["instance"]["l_r"], r["instance"]["c_e"],
            r["instance"]["b"], r["demand"]["hi"],
        ]
        + [repr(float(r[c])) if c in r else "" for c in value_cols]
        for r in results
    ]
    _write_csv(out_dir, "table.csv", cols + value_cols, csv_rows)
    return {"table": table, "rows": results}


# ---------------------------------------------------------------- ingest

def cmd_ingest(cfg, out_dir):
    node = cfg.get("ingest")
    if node is None:
        raise ConfigError("ingest: missing 'ingest' section")
    _check_keys(node, "ingest", required=("input",))
    path = _str(node, "input", "ingest")
    try:
        rows = read_demand_csv(path)
        process = ingest_empirical(rows)
    except OSError as exc:
        raise ConfigError(f"ingest: cannot read {path!r}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"ingest: {exc}") from exc
    _write_json(
        out_dir, "process.json",
        {
            "mu": list(process.mu), "sigma": list(process.sigma),
            "trunc_lo": process.trunc_lo, "trunc_hi": process.trunc_hi,
        },
    )
    return {
        "horizon": process.horizon,
        "peak_mean": max(process.mu),
        "peak_period": int(np.argmax(process.mu)),
        "n_rows": len(rows),
    }


# ---------------------------------------------------------------- driver

TOP_KEYS = (
    "schema_version", "seed", "out", "instance", "demand",
    "dp", "train", "eval", "sweep", "ingest",
)
RANDOMIZED = {"train", "eval", "sweep"}
NEEDS_INSTANCE = {"dp", "train", "eval"}


def _load_config(args):
    cfg = _read_json_file(args.config, "config")
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    _check_keys(cfg, "config", required=("schema_version",), optional=TOP_KEYS)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"config.schema_version: expected {SCHEMA_VERSION}, "
            f"got {cfg['schema_version']!r}"
        )
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if "seed" in cfg and (isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], int)):
        raise ConfigError(f"config.seed: expected an integer, got {cfg['seed']!r}")
    if args.command in RANDOMIZED and "seed" not in cfg:
        raise ConfigError(
            f"{args.command}: an explicit seed is required "
            "(config 'seed' or --seed; wall-clock seeding is not supported)"
        )
    cfg.setdefault("seed", 0)
    if args.command in NEEDS_INSTANCE:
        for key in ("instance", "demand"):
            if key not in cfg:
                raise ConfigError(f"config: missing required key(s): {key}")
    if "out" not in cfg:
        raise ConfigError("config: an output directory is required ('out' or --out)")
    return cfg


def _acquire_lock(out_dir):
    lock_path = os.path.join(out_dir, LOCK_NAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {out_dir!r} is locked by another run "
            f"(remove {lock_path} if that run is dead)"
        ) from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    return lock_path


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dualsource",
        description="Dual-sourcing inventory experiments: exact DP, heuristics, "
        "and trainable neural controllers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "dp": "solve an instance exactly by average-cost value iteration",
        "train": "train a neural controller and save it with its loss curve",
        "eval": "evaluate a policy by common-random-number simulation",
        "sweep": "reproduce published cost-table rows at configurable fidelity",
        "ingest": "fit a demand process from an empirical demand CSV",
    }
    for name, help_text in specs.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to a JSON config")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", default=None, help="override output directory")
        if name == "train":
            sp.add_argument(
                "--warm-start", default=None,
                help="path to a saved network to continue training from",
            )
        if name == "eval":
            sp.add_argument(
                "--compare", default=None,
                help="path to a baseline policy for a paired comparison",
            )
            sp.add_argument(
                "--project", action="store_true",
                help="emit the long-run policy projection CSV",
            )
        if name == "sweep":
            sp.add_argument(
                "--dry-run", action="store_true", help="list planned rows and stop"
            )
            sp.add_argument(
                "--resume", action="store_true", help="skip rows already on disk"
            )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    lock_path = None
    try:
        lock_path = _acquire_lock(out_dir)
        if args.command == "dp":
            body = cmd_dp(cfg, out_dir)
        elif args.command == "train":
            body = cmd_train(cfg, out_dir, warm_start=args.warm_start)
        elif args.command == "eval":
            body = cmd_eval(
                cfg, out_dir, compare_path=args.compare, project_flag=args.project
            )
        elif args.command == "sweep":
            body = cmd_sweep(cfg, out_dir, dry_run=args.dry_run, resume=args.resume)
        else:
            body = cmd_ingest(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        if lock_path is not None and os.path.exists(lock_path):
            os.remove(lock_path)

    summary = {"command": args.command, "config": cfg, "result": body}
    _write_json(out_dir, "summary.json", summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
