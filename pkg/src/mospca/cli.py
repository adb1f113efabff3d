"""Command-line entry point: fit, predict, and experiment.

Exit codes: 1 usage, 2 data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .data import CLASSIFICATION, REGRESSION, Centering, DataError, SplitPlan, center, read_csv
from .grassmann import OptimizationError
from .harness import (
    ExperimentPlan,
    default_lambda_grid,
    fit_method,
    pareto_sweep,
    prediction_error,
    run_experiment,
)
from .kernel import CenteredKernel, KernelSpec, fit_kernel_spca, kpcr_kpcc
from .models import ModelParams, SeparableDataError, predict_from_embedding
from .nuisance import DegenerateNoiseError
from .solvers import FitConfig, FitError, FitResult, InvariantError, fit

SCHEMA_VERSION = 1
EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3
TASK_FLAGS = {"reg": REGRESSION, "class": CLASSIFICATION}
ALGORITHM_FLAGS = {"alt": "alternating", "sub": "substitution"}
NUMERICAL_ERRORS = (
    FitError,
    InvariantError,
    OptimizationError,
    SeparableDataError,
    DegenerateNoiseError,
    np.linalg.LinAlgError,
    FloatingPointError,
)

log = logging.getLogger("mospca")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- atomic output -----------------------------------------------------------


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- model artifact ----------------------------------------------------------


def _pack(a) -> dict | None:
    if a is None:
        return None
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unpack(d) -> np.ndarray | None:
    if d is None:
        return None
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def _num(x):
    return None if x is None else float(x)


def artifact_dict(result: FitResult, feature_names=None, response_names=None) -> dict:
    p, c = result.params, result.centering
    classes = None
    if c.classes is not None:
        is_int = np.issubdtype(c.classes.dtype, np.integer)
        classes = {
            "dtype": "int" if is_int else "str",
            "values": [int(v) if is_int else str(v) for v in c.classes],
        }
    kernel = None
    if result.kernel is not None:
        ck = result.kernel
        kernel = {
            "kind": ck.spec.kind,
            "bandwidth": _num(ck.spec.bandwidth),
            "X_train": _pack(ck.X_train),
            "row_means": _pack(ck.row_means),
            "grand_mean": float(ck.grand_mean),
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "method": result.method,
        "mode": result.mode,
        "task": c.task,
        "feature_names": list(feature_names) if feature_names else None,
        "response_names": list(response_names) if response_names else None,
        "centering": {
            "x_mean": _pack(c.x_mean),
            "x_scale": _pack(c.x_scale),
            "y_mean": _pack(c.y_mean),
            "classes": classes,
        },
        "params": {
            "L": _pack(p.L),
            "beta": _pack(p.beta),
            "lambda": _num(p.lam) if math.isfinite(p.lam) else None,
            "gamma": float(p.gamma),
            "sigma_x2": _num(p.sigma_x2),
            "alpha": _num(p.alpha),
            "sigma_y2": _num(p.sigma_y2),
        },
        "kernel": kernel,
    }


def save_model(path, result: FitResult, feature_names=None, response_names=None) -> None:
    text = json.dumps(artifact_dict(result, feature_names, response_names), indent=1)
    write_atomic(path, text + "\n")


class LoadedModel:
    """A model restored from an artifact; predicts like the FitResult it came from."""

    def __init__(self, d: dict):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported model schema version {version!r}")
        self.meta = d
        self.method, self.mode, self.task = d["method"], d["mode"], d["task"]
        self.feature_names = d.get("feature_names")
        self.response_names = d.get("response_names")
        c = d["centering"]
        classes = None
        if c["classes"] is not None:
            vals = c["classes"]["values"]
            classes = np.array(vals, dtype=int if c["classes"]["dtype"] == "int" else str)
        self.centering = Centering(
            self.task, _unpack(c["x_mean"]), _unpack(c["x_scale"]), _unpack(c["y_mean"]), classes
        )
        p = d["params"]
        lam = p["lambda"] if p["lambda"] is not None else math.inf
        self.params = ModelParams(
            _unpack(p["L"]), _unpack(p["beta"]), lam, p["gamma"], p["sigma_x2"], p["alpha"], p["sigma_y2"]
        )
        self.kernel = None
        if d.get("kernel") is not None:
            k = d["kernel"]
            self.kernel = CenteredKernel(
                K=None,
                row_means=_unpack(k["row_means"]),
                grand_mean=k["grand_mean"],
                X_train=_unpack(k["X_train"]),
                spec=KernelSpec(k["kind"], k["bandwidth"]),
            )

    @property
    def n_features(self) -> int:
        return self.centering.x_mean.shape[0]

    def transform(self, X_raw) -> np.ndarray:
        X = self.centering.apply_x(X_raw)
        if self.kernel is not None:
            return self.kernel.project(X, self.params.L)
        return X @ self.params.L

    def predict(self, X_raw):
        return predict_from_embedding(self.transform(X_raw), self.params.beta, self.centering)


def load_model(path) -> LoadedModel:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model artifact {path}: {exc}")
    return LoadedModel(d)


# -- commands ----------------------------------------------------------------


def _load_dataset(path, response_col, task, standardize=False):
    if not Path(path).exists():
        raise DataError(f"no such file: {path}")
    X, y, names, rname = read_csv(path, response_col, task)
    if y is None:
        raise DataError("a response column is required")
    ds = center(
        X, y, task, standardize=standardize,
        feature_names=names, response_names=[rname] if rname else None,
    )
    return ds, X, y


def _spca_config(args, method):
    return FitConfig(
        method=method,
        algorithm=ALGORITHM_FLAGS[args.algorithm],
        mode=args.mode,
        r=args.r,
        lam=args.lam,
        reg=args.reg,
        seed=args.seed,
        max_outer=args.max_outer,
    )


def cmd_fit(args) -> int:
    task = TASK_FLAGS[args.task]
    ds, X, y = _load_dataset(args.data, args.response_col, task, args.standardize)
    method = args.method
    if method in ("lspca", "lrpca"):
        result = fit(ds, _spca_config(args, method))
    elif method in ("klspca", "klrpca"):
        spec = KernelSpec(args.kernel, args.bandwidth)
        result = fit_kernel_spca(ds, spec, _spca_config(args, method[1:]))
    else:
        bw = args.bandwidth
        if method in ("kpcr", "kpcc") and args.kernel == "linear":
            result = kpcr_kpcc(ds, KernelSpec("linear"), args.r, args.reg)
        else:
            result = fit_method(ds, method, "none", args.r, None, bw, reg=args.reg)
    if args.out:
        save_model(args.out, result, ds.feature_names, ds.response_names)
    train_error = prediction_error(result, X, y, task)
    p = result.params
    lines = [
        f"method {result.method}",
        f"mode {result.mode}",
        f"r {p.L.shape[1]}",
        f"converged {result.converged}",
        f"iterations {result.iterations}",
    ]
    if result.nll_trace:
        lines.append(f"nll {result.nll_trace[-1]!r}")
    lines += [
        f"variation_explained {result.variation_explained!r}",
        f"train_error {train_error!r}",
        f"lambda {p.lam!r}",
        f"gamma {p.gamma!r}",
    ]
    for name in ("sigma_x2", "alpha", "sigma_y2"):
        if getattr(p, name) is not None:
            lines.append(f"{name} {getattr(p, name)!r}")
    print("\n".join(lines))
    return 0


def _prediction_csv(model: LoadedModel, X_raw) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if model.task == REGRESSION:
        q = model.params.beta.shape[1]
        names = model.response_names if model.response_names and len(model.response_names) == q else [
            f"y{j}" for j in range(q)
        ]
        w.writerow(names)
        if len(X_raw):
            for row in model.predict(X_raw).values:
                w.writerow([repr(float(v)) for v in row])
    else:
        classes = model.centering.classes
        w.writerow([f"p_{c}" for c in classes] + ["label"])
        if len(X_raw):
            pred = model.predict(X_raw)
            for row, lab in zip(pred.proba, pred.labels):
                w.writerow([repr(float(v)) for v in row] + [lab])
    return buf.getvalue()


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if not Path(args.data).exists():
        raise DataError(f"no such file: {args.data}")
    response_col = args.response_col
    X, _, names, _ = read_csv(args.data, None, model.task)
    if response_col is None and names and model.response_names:
        if model.response_names[0] in names:
            response_col = model.response_names[0]
    if response_col is not None and X.size:
        X, _, _, _ = read_csv(args.data, response_col, model.task)
    if X.size == 0:
        X = np.empty((0, model.n_features))
    elif X.shape[1] != model.n_features:
        raise DataError(f"model expects {model.n_features} features, file has {X.shape[1]}")
    text = _prediction_csv(model, X)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# -- experiment plan files ---------------------------------------------------


def _floats(s):
    return tuple(float(v) for v in s.replace(",", " ").split()) if s and s.strip() else None


def _ints(s):
    return tuple(int(v) for v in s.replace(",", " ").split())


def _names(s):
    return [v for v in s.replace(",", " ").split() if v]


def read_plan(path):
    """Parse an INI plan; returns (data section dict, ExperimentPlan, pareto dict or None)."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise DataError(f"cannot read plan file {path}")
    if "experiment" not in cp:
        raise UsageError("plan file needs an [experiment] section")
    e = cp["experiment"]
    base = Path(path).parent
    try:
        data = {
            "path": str((base / e["data"]) if not os.path.isabs(e["data"]) else e["data"]),
            "response_col": e.get("response_col", "-1"),
            "task": TASK_FLAGS[e.get("task", "reg")],
            "standardize": e.getboolean("standardize", False),
        }
        plan = ExperimentPlan(
            methods=_names(e.get("methods", "")),
            r_grid=_ints(e.get("r_grid", "2")),
            lambda_grid=_floats(e.get("lambda_grid")),
            bandwidth_grid=_floats(e.get("bandwidth_grid")),
            split=SplitPlan(
                seed=e.getint("seed", 0),
                test_fraction=e.getfloat("test_fraction", 0.2),
                n_folds=e.getint("n_folds", 10),
                n_repeats=e.getint("n_repeats", 10),
            ),
            algorithm=ALGORITHM_FLAGS[e.get("algorithm", "alt")],
            reg=e.getfloat("reg", 0.0),
            max_outer=e.getint("max_outer", 100),
        )
        pareto = None
        if "pareto" in cp:
            s = cp["pareto"]
            pareto = {
                "methods": _names(s.get("methods", "")),
                "r": s.getint("r", 2),
                "lambda_grid": _floats(s.get("lambda_grid")),
                "n_points": s.getint("n_points", 20),
                "seed": s.getint("seed", plan.split.seed),
                "bandwidth": s.getfloat("bandwidth", fallback=None),
            }
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad plan file {path}: {exc}")
    return data, plan, pareto


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_experiment(args) -> int:
    data, plan, pareto = read_plan(args.plan)
    if args.seed is not None:
        from dataclasses import replace

        plan.split = replace(plan.split, seed=args.seed)
    ds, _, _ = _load_dataset(data["path"], data["response_col"], data["task"], data["standardize"])
    out = Path(args.out or "results")

    records, summary = run_experiment(ds, plan)
    lines = [
        json.dumps({k: _json_safe(v) for k, v in r.as_dict(timing=False).items()}, sort_keys=True)
        for r in records
    ]
    write_atomic(out / "records.jsonl", "".join(line + "\n" for line in lines))
    write_atomic(
        out / "timings.csv",
        _csv_text(["method", "mode", "repeat", "wall_time"], [(r.method, r.mode, r.repeat, r.wall_time) for r in records]),
    )
    cols = list(summary[0].keys()) if summary else []
    write_atomic(out / "summary.csv", _csv_text(cols, [[row[c] for c in cols] for row in summary]))

    failed = [r for r in records if r.status != "ok"]
    for row in summary:
        print(
            f"{row['method']:8s} {row['mode']:4s} test_error {row['mean_test_error']:.6g}"
            f" +- {row['std_error']:.3g} (se) / {row['std_dev']:.3g} (sd)"
            f"  ok {row['n_ok']} failed {row['n_failed']}"
        )
    for r in failed:
        print(f"FAILED repeat {r.repeat} {r.method}:{r.mode}: {r.message}", file=sys.stderr)

    if pareto and pareto["methods"]:
        rows = []
        for m in pareto["methods"]:
            grid = pareto["lambda_grid"] or default_lambda_grid(
                ds, pareto["n_points"], kernel=m.startswith("k")
            )
            for pt in pareto_sweep(
                ds, m, pareto["r"], grid, seed=pareto["seed"],
                bandwidth=pareto["bandwidth"], algorithm=plan.algorithm,
                reg=plan.reg, max_outer=plan.max_outer,
            ):
                for part, ve, err in (("train", pt.train_ve, pt.train_error), ("test", pt.test_ve, pt.test_error)):
                    rows.append([m, pt.label, part, pt.lam, ve, err])
        write_atomic(
            out / "pareto.csv",
            _csv_text(["sweep", "label", "split", "lambda", "variation_explained", "error"], rows),
        )
    return 3 if failed and len(failed) == len(records) else 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mospca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a model and write an artifact")
    f.add_argument("--data", required=True)
    f.add_argument("--response-col", default="-1", help="column name or 0-based index (default: last)")
    f.add_argument("--task", choices=TASK_FLAGS, required=True)
    f.add_argument(
        "--method",
        choices=["lspca", "lrpca", "klspca", "klrpca", "pcr", "pcc", "kpcr", "kpcc"],
        required=True,
    )
    f.add_argument("--mode", choices=["cv", "mle"], default="cv")
    f.add_argument("--algorithm", choices=ALGORITHM_FLAGS, default="alt")
    f.add_argument("--r", type=int, default=2)
    f.add_argument("--lambda", dest="lam", type=float, default=1.0)
    f.add_argument("--kernel", choices=["linear", "rbf"], default="rbf")
    f.add_argument("--bandwidth", type=float, default=None)
    f.add_argument("--reg", type=float, default=0.0, help="ridge penalty on beta (logistic)")
    f.add_argument("--max-outer", type=int, default=100)
    f.add_argument("--standardize", action="store_true")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="model artifact path")
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved artifact")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--response-col", default=None, help="column to drop before predicting")
    p.add_argument("--out", help="predictions CSV (default: stdout)")
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("experiment", help="run an experiment plan file")
    e.add_argument("plan")
    e.add_argument("--seed", type=int, default=None, help="override the plan's master seed")
    e.add_argument("--out", help="output directory (default: results)")
    e.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MOSPCA_LOG_LEVEL", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mospca: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"mospca: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERICAL_ERRORS as exc:
        print(f"mospca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"mospca: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
