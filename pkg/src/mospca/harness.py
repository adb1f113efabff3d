"""Experiment protocol: repeated hold-out splits, k-fold CV over the
hyperparameter grid, refit on the full training split, test evaluation, and
lambda sweeps for prediction-error / variation-explained trade-off curves."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .baselines import pcr_pcc, rrr
from .data import CLASSIFICATION, REGRESSION, Dataset, SplitPlan, split, variation_explained
from .kernel import KernelSpec, bandwidth_grid, fit_kernel_spca, kpcr_kpcc
from .solvers import FitConfig, FitResult, fit

log = logging.getLogger(__name__)

SPCA_METHODS = {"lspca", "lrpca", "klspca", "klrpca"}
BASELINE_METHODS = {"pcr", "pcc", "kpcr", "kpcc"}
KERNEL_METHODS = {"klspca", "klrpca", "kpcr", "kpcc"}
REGRESSION_METHODS = {"lspca", "klspca", "pcr", "kpcr"}


def metrics(Y_hat, Y_true, task: str) -> float:
    """Mean squared error over all entries, or the fraction misclassified."""
    Y_hat = np.asarray(Y_hat)
    Y_true = np.asarray(Y_true)
    if Y_true.size == 0:
        raise ValueError("empty input")
    if task == REGRESSION:
        Y_hat = Y_hat.reshape(Y_true.shape) if Y_hat.size == Y_true.size else Y_hat
        if Y_hat.shape != Y_true.shape:
            raise ValueError(f"shape mismatch {Y_hat.shape} vs {Y_true.shape}")
        return float(np.mean((Y_hat - Y_true) ** 2))
    Y_hat, Y_true = Y_hat.ravel(), Y_true.ravel()
    if Y_hat.shape != Y_true.shape:
        raise ValueError(f"shape mismatch {Y_hat.shape} vs {Y_true.shape}")
    return float(np.mean(Y_hat != Y_true))


def prediction_error(result: FitResult, raw_X, raw_y, task: str) -> float:
    pred = result.predict(raw_X)
    if task == REGRESSION:
        Y_true = np.asarray(raw_y, dtype=float)
        if Y_true.ndim == 1:
            Y_true = Y_true[:, None]
        return metrics(pred.values, Y_true, task)
    return metrics(pred.labels, raw_y, task)


def heldout_variation_explained(result: FitResult, raw_X) -> float:
    """v.e. of held-out rows (centered with training statistics).

    Kernel models use the centered cross-kernel rows in place of X.
    """
    X = result.centering.apply_x(raw_X)
    if result.kernel is not None:
        X = result.kernel.center_rows(
            _cross_gram(result.kernel, X)
        )
    return variation_explained(X, result.params.L)


def _cross_gram(ck, X):
    from .kernel import gram

    return gram(X, ck.spec, ck.X_train)


def _parse_method(name: str) -> tuple[str, str]:
    method, _, mode = name.partition(":")
    if method not in SPCA_METHODS | BASELINE_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method in BASELINE_METHODS:
        return method, "none"
    mode = mode or "cv"
    if mode not in ("cv", "mle"):
        raise ValueError(f"unknown mode {mode!r}")
    return method, mode


def default_lambda_grid(dataset: Dataset, n_points: int = 20, kernel: bool = False) -> list[float]:
    """Log-spaced grid over [1e-4, 1e4] times the loss-to-variance balance point.

    The balance point is the per-sample loss of the zero model divided by the
    per-sample PCA-term size (||X||_F^2 / n; the centered Gram matrix for
    kernel methods).
    """
    n = dataset.n
    if dataset.task == REGRESSION:
        loss_scale = float(np.sum(dataset.Y**2)) / n
    else:
        loss_scale = math.log(dataset.q)
    if kernel:
        from .kernel import KernelSpec as _KS, build_kernel

        X = build_kernel(dataset, _KS()).K
    else:
        X = dataset.X
    var_scale = float(np.sum(X**2)) / n
    center = loss_scale / var_scale if var_scale > 0 else 1.0
    return [float(v) for v in center * np.logspace(-4, 4, n_points)]


@dataclass
class ExperimentPlan:
    methods: list[str]
    r_grid: tuple[int, ...] = (2,)
    lambda_grid: tuple[float, ...] | None = None
    bandwidth_grid: tuple[float, ...] | None = None
    split: SplitPlan = field(default_factory=lambda: SplitPlan(0, 0.2, 10, 10))
    algorithm: str = "alternating"
    reg: float = 0.0
    max_outer: int = 100
    width: int | None = None

    def __post_init__(self):
        if not self.methods or not self.r_grid:
            raise ValueError("methods and r_grid must be nonempty")
        if self.lambda_grid is not None and len(self.lambda_grid) == 0:
            raise ValueError("lambda_grid must be nonempty")
        if self.bandwidth_grid is not None and len(self.bandwidth_grid) == 0:
            raise ValueError("bandwidth_grid must be nonempty")
        for m in self.methods:
            _parse_method(m)

    def parallel_width(self) -> int:
        if self.width is not None:
            return max(1, int(self.width))
        return max(1, int(os.environ.get("MOSPCA_WORKERS", "1")))


@dataclass
class EvalRecord:
    method: str
    mode: str
    r: int
    lam: float | None
    bandwidth: float | None
    repeat: int
    test_error: float
    train_error: float
    variation_explained: float
    wall_time: float
    seed: int
    status: str = "ok"
    message: str = ""

    def as_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


def fit_method(
    train: Dataset,
    method: str,
    mode: str,
    r: int,
    lam: float | None = None,
    bandwidth: float | None = None,
    *,
    algorithm: str = "alternating",
    reg: float = 0.0,
    max_outer: int = 100,
) -> FitResult:
    """Fit one method/hyperparameter cell on a training dataset."""
    spec = KernelSpec("rbf", bandwidth) if method in KERNEL_METHODS else None
    if method in ("pcr", "pcc"):
        return pcr_pcc(train, r, reg)
    if method in ("kpcr", "kpcc"):
        return kpcr_kpcc(train, spec, r, reg)
    base = method.removeprefix("k")
    config = FitConfig(
        method=base,
        algorithm=algorithm if base == "lspca" else "alternating",
        mode=mode,
        r=r,
        lam=lam if lam is not None else 1.0,
        reg=reg,
        max_outer=max_outer,
    )
    if method in KERNEL_METHODS:
        return fit_kernel_spca(train, spec, config)
    return fit(train, config)


def _check_task(method: str, task: str):
    want = REGRESSION if method in REGRESSION_METHODS else CLASSIFICATION
    if task != want:
        raise ValueError(f"method {method} needs a {want} dataset")


def _grid(method, mode, plan: ExperimentPlan, train: Dataset):
    lams = [None]
    if method in SPCA_METHODS and mode == "cv":
        lams = list(plan.lambda_grid or default_lambda_grid(train, kernel=method in KERNEL_METHODS))
    bws = [None]
    if method in KERNEL_METHODS:
        bws = list(plan.bandwidth_grid or bandwidth_grid(train.X))
    return [(r, lam, bw) for r, lam, bw in product(plan.r_grid, lams, bws)]


def _tie_key(cell):
    r, lam, bw = cell
    return (lam if lam is not None else 0.0, bw if bw is not None else 0.0, r)


def _cv_cell(dataset, split_, method, mode, cell, plan):
    r, lam, bw = cell
    errors = []
    for fold in split_.folds:
        fit_idx = np.setdiff1d(split_.train, fold)
        fold_train = dataset.take(fit_idx)
        res = fit_method(
            fold_train, method, mode, r, lam, bw,
            algorithm=plan.algorithm, reg=plan.reg, max_outer=plan.max_outer,
        )
        errors.append(
            prediction_error(res, dataset.raw_x()[fold], dataset.raw_y()[fold], dataset.task)
        )
    return float(np.mean(errors))


def select_hyperparameters(dataset, split_, method, mode, plan, pool=None):
    """CV-select (r, lambda, bandwidth) by mean fold error; ties go to the
    smallest lambda, then bandwidth, then r."""
    train = dataset.take(split_.train)
    cells = sorted(_grid(method, mode, plan, train), key=_tie_key)
    if len(cells) == 1:
        return cells[0], {cells[0]: float("nan")}, 0

    def run(cell):
        try:
            return _cv_cell(dataset, split_, method, mode, cell, plan)
        except Exception as exc:  # recorded and counted, the cell drops out
            log.warning("CV cell %s %s failed: %s", method, cell, exc)
            return None

    errs = list(pool.map(run, cells)) if pool is not None else [run(c) for c in cells]
    scores = {c: e for c, e in zip(cells, errs) if e is not None}
    n_failed = sum(e is None for e in errs)
    if not scores:
        raise RuntimeError(f"every CV cell failed for {method}")
    best = min(scores, key=lambda c: (scores[c], _tie_key(c)))
    return best, scores, n_failed


def run_experiment(dataset: Dataset, plan: ExperimentPlan):
    """Run the full protocol; returns (records, summary)."""
    methods = [_parse_method(m) for m in plan.methods]
    for method, _ in methods:
        _check_task(method, dataset.task)
    width = plan.parallel_width()
    pool = ThreadPoolExecutor(width) if width > 1 else None
    records: list[EvalRecord] = []
    raw_X, raw_y = dataset.raw_x(), dataset.raw_y()
    try:
        for repeat in range(plan.split.n_repeats):
            split_ = split(dataset, plan.split, repeat)
            seed = plan.split.repeat_seed(repeat)
            train = dataset.take(split_.train)
            for method, mode in methods:
                start = time.perf_counter()
                r = lam = bw = None
                try:
                    (r, lam, bw), _, n_failed = select_hyperparameters(
                        dataset, split_, method, mode, plan, pool
                    )
                    res = fit_method(
                        train, method, mode, r, lam, bw,
                        algorithm=plan.algorithm, reg=plan.reg, max_outer=plan.max_outer,
                    )
                    rec = EvalRecord(
                        method=method,
                        mode=mode,
                        r=int(r),
                        lam=_final_lambda(res, lam),
                        bandwidth=res.kernel.spec.bandwidth if res.kernel is not None else None,
                        repeat=repeat,
                        test_error=prediction_error(
                            res, raw_X[split_.test], raw_y[split_.test], dataset.task
                        ),
                        train_error=prediction_error(
                            res, raw_X[split_.train], raw_y[split_.train], dataset.task
                        ),
                        variation_explained=res.variation_explained,
                        wall_time=time.perf_counter() - start,
                        seed=seed,
                        message=f"{n_failed} CV cells failed" if n_failed else "",
                    )
                except Exception as exc:
                    log.warning("repeat %d %s failed: %s", repeat, method, exc)
                    rec = EvalRecord(
                        method, mode, int(r or plan.r_grid[0]), lam, bw, repeat,
                        float("nan"), float("nan"), float("nan"),
                        time.perf_counter() - start, seed, "failed", str(exc),
                    )
                records.append(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return records, summarize(records)


def _final_lambda(res: FitResult, lam):
    if res.mode == "mle":
        return float(res.params.lam)
    return None if lam is None else float(lam)


def summarize(records: list[EvalRecord]) -> list[dict]:
    """Mean test error per (method, mode) with both the standard error and the
    sample standard deviation over repeats; failed cells are counted, not averaged."""
    keys = []
    for rec in records:
        if (rec.method, rec.mode) not in keys:
            keys.append((rec.method, rec.mode))
    rows = []
    for method, mode in keys:
        group = [r for r in records if (r.method, r.mode) == (method, mode)]
        ok = [r for r in group if r.status == "ok"]
        errs = np.array([r.test_error for r in ok])
        ves = np.array([r.variation_explained for r in ok])
        k = len(ok)
        std = float(np.std(errs, ddof=1)) if k > 1 else float("nan")
        rows.append(
            {
                "method": method,
                "mode": mode,
                "n_ok": k,
                "n_failed": len(group) - k,
                "mean_test_error": float(errs.mean()) if k else float("nan"),
                "std_error": std / math.sqrt(k) if k > 1 else float("nan"),
                "std_dev": std,
                "mean_train_error": float(np.mean([r.train_error for r in ok])) if k else float("nan"),
                "mean_variation_explained": float(ves.mean()) if k else float("nan"),
            }
        )
    return rows


@dataclass
class ParetoPoint:
    label: str
    lam: float | None
    train_ve: float
    train_error: float
    test_ve: float
    test_error: float


def pareto_sweep(
    dataset: Dataset,
    method: str,
    r: int,
    lambda_grid,
    *,
    seed: int = 0,
    test_fraction: float = 0.2,
    bandwidth: float | None = None,
    algorithm: str = "alternating",
    reg: float = 0.0,
    max_outer: int = 100,
) -> list[ParetoPoint]:
    """One fit per lambda on an 80/20 split, plus the PCR/PCC (and, for
    regression, RRR) reference points. Points come in grid order, then references."""
    method, mode = _parse_method(method)
    _check_task(method, dataset.task)
    split_ = split(dataset, SplitPlan(seed, test_fraction, 1, 1))
    train = dataset.take(split_.train)
    raw_X, raw_y = dataset.raw_x(), dataset.raw_y()
    Xtr, ytr = raw_X[split_.train], raw_y[split_.train]
    Xte, yte = raw_X[split_.test], raw_y[split_.test]

    def point(label, lam, res):
        return ParetoPoint(
            label,
            lam,
            res.variation_explained,
            prediction_error(res, Xtr, ytr, dataset.task),
            heldout_variation_explained(res, Xte),
            prediction_error(res, Xte, yte, dataset.task),
        )

    if method in KERNEL_METHODS and bandwidth is None:
        bandwidth = KernelSpec().resolved(train.X).bandwidth
    points = []
    for lam in lambda_grid:
        res = fit_method(
            train, method, mode, r, float(lam), bandwidth,
            algorithm=algorithm, reg=reg, max_outer=max_outer,
        )
        points.append(point(method, float(lam), res))

    kernel = method in KERNEL_METHODS
    base = ("k" if kernel else "") + ("pcr" if dataset.task == REGRESSION else "pcc")
    points.append(point(base, None, fit_method(train, base, "none", r, None, bandwidth, reg=reg)))
    if dataset.task == REGRESSION and not kernel:
        points.append(point("rrr", None, _rrr_result(train, r)))
    return points


def _rrr_result(train: Dataset, r: int) -> FitResult:
    from .models import ModelParams

    rank = min(r, train.q, train.p)
    L, beta = rrr(train.X, train.Y, rank)
    return FitResult(
        params=ModelParams(L, beta, lam=np.inf),
        Z=train.X @ L,
        nll_trace=[],
        variation_explained=variation_explained(train.X, L),
        converged=True,
        iterations=0,
        wall_time=0.0,
        method="rrr",
        mode="none",
        centering=train.centering,
    )
