"""Command-line interface: ``vcpcr {simulate,fit,cv,benchmark,metrics}``.

Exit codes: 0 success, 1 usage or invalid input, 2 numerical/model failure,
3 file input/output failure. Every command writes ``resolved-config.json``
into its output directory. The default output directory comes from
``$VCPCR_OUTPUT_DIR`` (falls back to ``./vcpcr-out``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, baselines, solvers
from .cv import METHODS, GridSpec, get_method, nested_cv, random_balanced_partition
from .data import CLASSIFICATION, REGRESSION, TASKS, apply_standardization, load_csv, write_csv
from .data import standardize, standardize_response
from .errors import DataError, EmptyFile, MissingColumn, ModelError, ParseError, VcpcrError
from .files import atomic_write_text, dumps, read_json, write_json
from .metrics import MetricReport, cluster_pair_mcc, msep, support_mcc
from .model import WeightScheme, compute_weights, fit_vcpcr, lambda_max
from .seeding import child_seed
from .simulation import SimSpec, canonical_specs, generate_dataset

log = logging.getLogger("vcpcr")

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_IO = 0, 1, 2, 3
OUTPUT_ENV = "VCPCR_OUTPUT_DIR"


class UsageError(Exception):
    pass


class FileFailure(Exception):
    """Input could not be read or output could not be written."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_out():
    return os.environ.get(OUTPUT_ENV, "vcpcr-out")


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV})")
    p.add_argument("--config-file", default=None,
                   help="JSON object of option defaults; explicit flags win")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--response-column", default="y")
    p.add_argument("--task", choices=TASKS, default=REGRESSION)
    p.add_argument("--truth", default=None, help="truth.json from `simulate`")


def build_parser():
    parser = _Parser(prog="vcpcr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vcpcr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a block-covariance dataset")
    _common(p)
    p.add_argument("--config", type=int, default=3)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--allow-noncanonical", action="store_true")

    p = sub.add_parser("fit", help="fit one method with fixed hyperparameters")
    _common(p)
    _data_args(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="sparsity penalty (VC-PCR membership or CEN grouping)")
    p.add_argument("--lambda-ratio", type=float, default=None,
                   help="VC-PCR penalty as a fraction of lambda_max")
    p.add_argument("--delta", type=float, default=None, help="weight / lasso penalty")
    p.add_argument("--delta-ratio", type=float, default=None,
                   help="lasso-type penalty as a fraction of its delta_max")
    p.add_argument("--init", type=int, default=0, help="index of the random initial partition")

    p = sub.add_parser("cv", help="nested cross-validation for one method")
    _common(p)
    _data_args(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--grids", type=json.loads, default=None,
                   help="JSON object of grid settings, e.g. '{\"outer_folds\": 5}'")

    p = sub.add_parser("benchmark", help="nested CV over datasets x methods x seeds")
    _common(p)
    p.add_argument("spec", help="benchmark JSON spec")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resume", action="store_true", help="skip cells already in results.jsonl")

    p = sub.add_parser("metrics", help="score a fit JSON against truth and/or data")
    _common(p)
    p.add_argument("--fit", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--response-column", default="y")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config_file:
        cfg = _read_json(args.config_file)
        if not isinstance(cfg, dict):
            raise UsageError("--config-file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown keys in config file: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.out is None:
        args.out = _default_out()
    return args


# ---------------------------------------------------------------- helpers

def _read_json(path):
    try:
        return read_json(path)
    except (OSError, json.JSONDecodeError) as e:
        raise FileFailure(f"cannot read {path}: {e}") from e


def _load_data(path, response_column, task=REGRESSION):
    try:
        return load_csv(path, response_column, task)
    except (OSError, ParseError, EmptyFile, MissingColumn) as e:
        raise FileFailure(str(e)) from e


def _write(path, text):
    try:
        atomic_write_text(path, text)
    except OSError as e:
        raise FileFailure(f"cannot write {path}: {e}") from e


def _write_json(path, obj):
    try:
        write_json(path, obj)
    except OSError as e:
        raise FileFailure(f"cannot write {path}: {e}") from e


def _resolved(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("config_file", "verbose")}
    cfg["version"] = __version__
    return cfg


class _Truth:
    def __init__(self, d):
        self.b = np.asarray(d["b"], dtype=float)
        self.labels = np.asarray(d["labels"], dtype=int)


def _load_truth(path, p):
    if path is None:
        return None
    t = _Truth(_read_json(path))
    if t.b.shape != (p,) or t.labels.shape != (p,):
        raise DataError(f"truth file describes {t.b.size} variables, data has {p}")
    return t


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    spec = SimSpec(args.config, args.n, args.rho, args.seed,
                   allow_noncanonical=args.allow_noncanonical)
    ds, truth = generate_dataset(spec)
    out = Path(args.out)
    _write(out / "data.csv", write_csv(None, ds))
    _write_json(out / "truth.json", truth.to_dict())
    return {"data": str(out / "data.csv"), "truth": str(out / "truth.json")}


def _ratio_or_value(value, ratio, top, name, default_ratio=None):
    if value is not None and ratio is not None:
        raise UsageError(f"give --{name} or --{name}-ratio, not both")
    if value is not None:
        return value
    if ratio is None:
        ratio = default_ratio
    if ratio is None:
        raise UsageError(f"--{name} or --{name}-ratio is required")
    return ratio * top


def fit_method(ds, method, K, lam=None, lambda_ratio=None, delta=None, delta_ratio=None,
               seed=0, init=0):
    """Fit one method on a dataset; returns a JSON-ready dict."""
    xs = standardize(ds.X)
    ys = standardize_response(ds.y, ds.task)
    Z, y = xs.values, ys.values
    p = Z.shape[1]
    if not 1 <= K <= p:
        raise DataError(f"K must lie in 1..{p}")
    partition = random_balanced_partition(
        p, K, child_seed(seed, f"partition/K={K}/init={init}")).labels
    if method.startswith("vcpcr-"):
        kind = method.split("-", 1)[1]
        if kind == "identity":
            d = 0.0
        elif kind == "ridge":
            if delta_ratio is not None:
                raise UsageError("the ridge weight penalty takes --delta, not --delta-ratio")
            d = 1.0 if delta is None else delta
        else:
            top = (solvers.logistic_delta_max(Z, y) if ds.task == CLASSIFICATION
                   else solvers.lasso_delta_max(Z, y))
            d = _ratio_or_value(delta, delta_ratio, top, "delta", 0.1)
        scheme = WeightScheme(kind, d)
        w = compute_weights(Z, y, scheme, ds.task)
        lm = lambda_max(Z, w, partition, K)
        lam_value = _ratio_or_value(lam, lambda_ratio, lm, "lambda", 0.1)
        fit = fit_vcpcr(ds, scheme, K, partition, lam_value)
        out = fit.to_dict()
        out["lambda_max"] = lm
        out["model_size"] = fit.model_size
        return out
    if lambda_ratio is not None and method != "cen":
        raise UsageError("--lambda-ratio only applies to VC-PCR")
    if method.startswith("crl-"):
        clusterer = method.split("-", 1)[1]
        part = baselines.cluster_columns(Z, clusterer, K, child_seed(seed, f"kmeans/K={K}/init={init}"))
        top = baselines.crl_delta_max(baselines.centroids(Z, part), y, ds.task)
        d = _ratio_or_value(delta, delta_ratio, top, "delta", 0.1)
        fit = baselines.crl_from_partition(Z, y, part, [d], ds.task)[0]
        out = fit.to_dict()
        out.update(method=method, delta_max=top, model_size=fit.model_size)
    else:
        if ds.task != REGRESSION:
            raise DataError("CEN is only defined for regression")
        top = baselines.cen_delta_max(Z, y)
        d = _ratio_or_value(delta, delta_ratio, top, "delta", 0.1)
        if lambda_ratio is not None:
            raise UsageError("CEN takes --lambda, not --lambda-ratio")
        fit = baselines.cen_fit(Z, y, K, d, 1.0 if lam is None else lam,
                                seed=child_seed(seed, f"cen/K={K}/init={init}"),
                                initial_partition=partition)
        out = fit.to_dict()
        out.update(method=method, delta_max=top, model_size=fit.model_size, intercept=0.0)
    out.update(task=ds.task, x_center=xs.center, x_scale=xs.scale,
               y_center=ys.center, y_scale=ys.scale)
    return out


def _predict_from_json(fit, X):
    Z = apply_standardization(X, np.asarray(fit["x_center"]), np.asarray(fit["x_scale"]))
    eta = Z @ np.asarray(fit["b"], dtype=float) + float(fit.get("intercept", 0.0))
    if fit["task"] == CLASSIFICATION:
        return solvers.sigmoid(eta)
    return fit["y_center"] + fit["y_scale"] * eta


def report(fit, ds=None, truth=None):
    b = np.asarray(fit["b"], dtype=float)
    r = MetricReport(msep=None, model_size=int(fit["model_size"]))
    if ds is not None:
        if ds.p != b.size:
            raise DataError(f"fit has {b.size} coefficients, data has {ds.p} columns")
        r.msep = msep(ds.y, _predict_from_json(fit, ds.X))
    if truth is not None:
        r.support_mcc = support_mcc(b, truth.b)
        r.cluster_mcc = cluster_pair_mcc(fit["labels"], truth.labels)
    return r


def cmd_fit(args):
    ds = _load_data(args.data, args.response_column, args.task)
    truth = _load_truth(args.truth, ds.p)
    fit = fit_method(ds, args.method, args.K, args.lam, args.lambda_ratio, args.delta,
                     args.delta_ratio, args.seed, args.init)
    out = Path(args.out)
    fit_json = json.loads(dumps(fit))
    _write_json(out / "fit.json", fit_json)
    metrics = report(fit_json, ds, truth).to_dict()
    _write_json(out / "metrics.json", metrics)
    return metrics


def _summary_csv(rows):
    buf = io.StringIO()
    fields = ["dataset", "method", "fixed_hp_name", "fixed_hp_value", "model_size", "msep",
              "support_mcc", "cluster_mcc", "cluster_mcc_linked", "class_mcc", "n_replicates"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    groups = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["method"], r["fixed_hp_value"]), []).append(r)
    for key in sorted(groups, key=lambda k: (k[0], k[1], -k[2])):
        g = groups[key]
        line = [key[0], key[1], g[0]["fixed_hp_name"], repr(key[2])]
        for f in fields[4:-1]:
            vals = [r[f] for r in g if r[f] is not None]
            line.append(repr(float(np.mean(vals))) if vals else "")
        line.append(len(g))
        w.writerow(line)
    return buf.getvalue()


def cmd_cv(args):
    ds = _load_data(args.data, args.response_column, args.task)
    truth = _load_truth(args.truth, ds.p)
    grids = GridSpec(**dict(args.grids or {}, seed=args.seed))
    res = nested_cv(ds, args.method, grids, truth=truth, dataset_name=Path(args.data).stem,
                    jobs=args.jobs)
    out = Path(args.out)
    _write(out / "results.jsonl", res.to_jsonl())
    _write(out / "details.jsonl", "".join(dumps(d) + "\n" for d in res.details))
    rows = [dict(r.to_dict(), seed=args.seed) for r in res.rows]
    _write(out / "summary.csv", _summary_csv(rows))
    return {"rows": len(res.rows)}


# ---------------------------------------------------------------- benchmark

def _sim_name(s):
    return f"sim-c{s['config']}-n{s['n']}-rho{s['rho']}"


def load_benchmark_spec(spec):
    """Validate a benchmark spec and expand it into sorted cell keys.

    Spec keys: ``methods`` (non-empty list), ``seeds`` (list of ints),
    ``simulations`` (list of {config, n, rho} or the string "canonical"),
    ``datasets`` (list of {name, path, response_column, task, truth}),
    ``grids`` (GridSpec fields, seed excluded).
    """
    if not isinstance(spec, dict):
        raise DataError("benchmark spec must be a JSON object")
    methods = spec.get("methods") or []
    if not methods:
        raise DataError("benchmark spec needs a non-empty 'methods' list")
    for m in methods:
        if m not in METHODS:
            raise DataError(f"unknown method {m!r}")
    seeds = spec.get("seeds", [0])
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise DataError("'seeds' must be a non-empty list of integers")
    sims = spec.get("simulations", [])
    if sims == "canonical":
        sims = [{"config": s.config, "n": s.n, "rho": s.rho} for s in canonical_specs()]
    datasets = {}
    for s in sims:
        SimSpec(s["config"], s["n"], s["rho"], allow_noncanonical=s.get("allow_noncanonical", False))
        datasets[_sim_name(s)] = {"simulation": s}
    for d in spec.get("datasets", []):
        if "name" not in d or "path" not in d:
            raise DataError("each dataset needs 'name' and 'path'")
        datasets[d["name"]] = d
    if not datasets:
        raise DataError("benchmark spec lists no datasets or simulations")
    grids = dict(spec.get("grids", {}))
    grids.pop("seed", None)
    GridSpec(**grids)
    cells = sorted((name, seed, m) for name in datasets for seed in seeds for m in methods)
    return datasets, grids, cells


def _run_cell(cell, dataset_entry, grids, base_dir):
    name, seed, method = cell
    if "simulation" in dataset_entry:
        s = dataset_entry["simulation"]
        ds, truth = generate_dataset(SimSpec(s["config"], s["n"], s["rho"], seed,
                                             allow_noncanonical=s.get("allow_noncanonical", False)))
    else:
        path = Path(base_dir, dataset_entry["path"])
        ds = _load_data(path, dataset_entry.get("response_column", "y"),
                        dataset_entry.get("task", REGRESSION))
        truth = None
        if dataset_entry.get("truth"):
            truth = _load_truth(Path(base_dir, dataset_entry["truth"]), ds.p)
    res = nested_cv(ds, method, GridSpec(**dict(grids, seed=seed)), truth=truth,
                    dataset_name=name)
    return [dict(r.to_dict(), seed=seed) for r in res.rows]


def _cell_job(args):
    cell = args[0]
    try:
        return cell, _run_cell(*args), None
    except (VcpcrError, FileFailure, OSError) as e:
        return cell, None, f"{type(e).__name__}: {e}"


def _read_results(path):
    rows = []
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _row_key(r):
    return (r["dataset"], r["seed"], r["method"], -r["fixed_hp_value"])


def cmd_benchmark(args):
    spec_path = Path(args.spec)
    spec = _read_json(spec_path)
    datasets, grids, cells = load_benchmark_spec(spec)
    out = Path(args.out)
    results_path = out / "results.jsonl"
    rows = _read_results(results_path) if args.resume else []
    done = {(r["dataset"], r["seed"], r["method"]) for r in rows}
    todo = [c for c in cells if c not in done]
    log.info("%d cells, %d to run", len(cells), len(todo))
    failures = []
    jobs = [(c, datasets[c[0]], grids, spec_path.parent) for c in todo]

    def collect(cell, new_rows, err):
        if err is not None:
            log.warning("cell %s failed: %s", cell, err)
            failures.append({"dataset": cell[0], "seed": cell[1], "method": cell[2], "error": err})
            return
        rows.extend(new_rows)
        rows.sort(key=_row_key)
        _write(results_path, "".join(dumps(r) + "\n" for r in rows))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for cell, new_rows, err in pool.map(_cell_job, jobs):
                collect(cell, new_rows, err)
    else:
        for j in jobs:
            collect(*_cell_job(j))
    rows.sort(key=_row_key)
    _write(results_path, "".join(dumps(r) + "\n" for r in rows))
    _write(out / "summary.csv", _summary_csv(rows))
    _write(out / "failures.jsonl", "".join(dumps(f) + "\n" for f in failures))
    return {"cells": len(cells), "ran": len(todo), "failed": len(failures)}


def cmd_metrics(args):
    fit = _read_json(args.fit)
    b = np.asarray(fit["b"])
    ds = None
    if args.data:
        ds = _load_data(args.data, args.response_column, fit.get("task", REGRESSION))
    truth = _load_truth(args.truth, b.size)
    r = report(fit, ds, truth).to_dict()
    _write_json(Path(args.out) / "metrics.json", r)
    return r


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv,
            "benchmark": cmd_benchmark, "metrics": cmd_metrics}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _write_json(Path(args.out) / "resolved-config.json", _resolved(args))
        result = COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ModelError as e:
        print(f"model error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_MODEL
    except DataError as e:
        print(f"invalid input: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(dumps(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
