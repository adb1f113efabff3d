"""Fitting LSPCA / LRPCA: the alternating algorithm and, for LSPCA, the
substitution algorithm that eliminates beta through its least-squares
optimum."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .baselines import pca
from .data import CLASSIFICATION, REGRESSION, Centering, Dataset, variation_explained
from .grassmann import CostOracle, MCGDOptions, OptimizationError, mcgd
from .models import (
    GAUSSIAN,
    ModelParams,
    Prediction,
    cv_grad_L,
    cv_objective,
    family_for,
    full_nll,
    predict_from_embedding,
    solve_beta,
    solve_beta_ls,
)
from .nuisance import CV, MLE, MODES, update_params

log = logging.getLogger(__name__)

METHODS = ("lspca", "lrpca")
ALGORITHMS = ("alternating", "substitution")

# relative slack allowed when checking that the objective trace never increases
MONOTONE_SLACK = 1e-10


class InvariantError(RuntimeError):
    """The objective increased across an outer iteration."""


class FitError(RuntimeError):
    """A solver failure, annotated with the outer iteration it happened in."""


@dataclass
class FitConfig:
    method: str = "lspca"
    algorithm: str = "alternating"
    mode: str = CV
    r: int = 2
    lam: float = 1.0
    gamma: float = 1.0  # cv mode only; mle mode starts at 1 and re-estimates
    outer_tol: float = 1e-8
    max_outer: int = 100
    mcgd: MCGDOptions | None = None
    reg: float = 0.0
    seed: int = 0
    L0: np.ndarray | None = None
    # called as callback(k, L, beta, value) after every outer iteration
    callback: Callable[[int, np.ndarray, np.ndarray, float], None] | None = None

    def validate(self, dataset: Dataset) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.algorithm == "substitution" and self.method != "lspca":
            raise ValueError("the substitution algorithm applies to lspca only")
        expected = REGRESSION if self.method == "lspca" else CLASSIFICATION
        if dataset.task != expected:
            raise ValueError(f"{self.method} needs a {expected} dataset")
        if not 1 <= self.r <= dataset.p:
            raise ValueError(f"r must lie in [1, {dataset.p}]")
        if self.mode == MLE and self.r >= dataset.p:
            raise ValueError("mle mode requires r < p")
        if self.mode == CV and not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class FitResult:
    params: ModelParams
    Z: np.ndarray
    nll_trace: list[float]
    variation_explained: float
    converged: bool
    iterations: int
    wall_time: float
    method: str
    mode: str
    centering: Centering
    kernel: Any = None  # CenteredKernel for kernel methods
    info: dict = field(default_factory=dict)

    def transform(self, X_raw) -> np.ndarray:
        X = self.centering.apply_x(X_raw)
        if self.kernel is not None:
            return self.kernel.project(X, self.params.L)
        return X @ self.params.L

    def predict(self, X_raw) -> Prediction:
        return predict_from_embedding(self.transform(X_raw), self.params.beta, self.centering)


def _default_mcgd(X: np.ndarray, opts: MCGDOptions | None) -> MCGDOptions:
    if opts is not None:
        return opts
    return MCGDOptions(grad_tol=1e-6 * max(1.0, float(np.linalg.norm(X))))


class _Objective:
    """Trace objective: cv-form G, or the full NLL once nuisance values exist."""

    def __init__(self, X, Y, family, mode):
        self.X, self.Y, self.family, self.mode = X, Y, family, mode

    def __call__(self, L, beta, lam, gamma, nuis=None):
        if self.mode == CV:
            return cv_objective(self.X, self.Y, self.family, L, beta, lam, gamma)
        return full_nll(self.X, self.Y, self.family, L, beta, nuis.sigma_x2, nuis.alpha, nuis.sigma_y2)


def _relative_change(prev: float, cur: float) -> float:
    return abs(prev - cur) / max(abs(prev), 1e-300)


def _check_monotone(prev: float, cur: float, k: int):
    if cur > prev + MONOTONE_SLACK * max(abs(prev), 1e-300):
        raise InvariantError(
            f"objective increased at outer iteration {k}: {prev!r} -> {cur!r}"
        )


def _params(L, beta, lam, gamma, nuis):
    if nuis is None:
        return ModelParams(L, beta, lam, gamma)
    return ModelParams(L, beta, nuis.lam, nuis.gamma, nuis.sigma_x2, nuis.alpha, nuis.sigma_y2)


def _result(dataset, config, L, beta, lam, gamma, nuis, trace, converged, k, start, info):
    return FitResult(
        params=_params(L, beta, lam, gamma, nuis),
        Z=dataset.X @ L,
        nll_trace=trace,
        variation_explained=variation_explained(dataset.X, L),
        converged=converged,
        iterations=k,
        wall_time=time.perf_counter() - start,
        method=config.method,
        mode=config.mode,
        centering=dataset.centering,
        info=info,
    )


def fit_alternating(dataset: Dataset, config: FitConfig) -> FitResult:
    """Alternate nuisance (mle mode) -> L by MCGD at fixed beta -> beta at fixed L."""
    config.validate(dataset)
    start = time.perf_counter()
    X, Y = dataset.X, dataset.Y
    family = family_for(dataset.task)
    objective = _Objective(X, Y, family, config.mode)
    opts = _default_mcgd(X, config.mcgd)

    L = pca(X, config.r) if config.L0 is None else np.array(config.L0, dtype=float)
    beta = solve_beta(family, X, Y, L, config.reg)
    lam, gamma, nuis = config.lam, config.gamma, None
    if config.mode == MLE:
        nuis = update_params(X, Y, L, beta, 1.0, family)
        lam, gamma = nuis.lam, nuis.gamma
    trace = [objective(L, beta, lam, gamma, nuis)]
    best = (trace[0], L, beta, lam, gamma, nuis)
    inner_iters = []

    converged = False
    k = 0
    for k in range(1, config.max_outer + 1):
        try:
            if config.mode == MLE and k > 1:
                nuis = update_params(X, Y, L, beta, gamma, family)
                lam, gamma = nuis.lam, nuis.gamma
            cost = CostOracle(
                lambda L_, b=beta, lm=lam, g=gamma: cv_objective(X, Y, family, L_, b, lm, g),
                lambda L_, b=beta, lm=lam, g=gamma: cv_grad_L(X, Y, family, L_, b, lm, g),
            )
            res = mcgd(cost, L, opts)
            L = res.L
            beta = solve_beta(family, X, Y, L, config.reg)
            value = objective(L, beta, lam, gamma, nuis)
        except (OptimizationError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise FitError(f"outer iteration {k}: {exc}") from exc
        inner_iters.append(res.iterations)
        _check_monotone(trace[-1], value, k)
        trace.append(value)
        if config.callback is not None:
            config.callback(k, L, beta, value)
        if value <= best[0]:
            best = (value, L, beta, lam, gamma, nuis)
        if _relative_change(trace[-2], value) <= config.outer_tol:
            converged = True
            break

    _, L, beta, lam, gamma, nuis = best
    info = {"inner_iterations": inner_iters}
    return _result(dataset, config, L, beta, lam, gamma, nuis, trace, converged, k, start, info)


class _SubstitutedCost:
    """G(L, beta*(L)) with beta*(L) the least-squares coefficients for XL."""

    def __init__(self, X, Y, lam, gamma):
        self.X, self.Y, self.lam, self.gamma = X, Y, lam, gamma
        self._key = None
        self._beta = None

    def beta(self, L):
        key = L.tobytes()
        if key != self._key:
            self._key, self._beta = key, solve_beta_ls(self.X, self.Y, L)
        return self._beta

    def value(self, L):
        return cv_objective(self.X, self.Y, GAUSSIAN, L, self.beta(L), self.lam, self.gamma)

    def grad(self, L):
        # d beta*/dL drops out: the partial derivative in beta vanishes at beta*
        return cv_grad_L(self.X, self.Y, GAUSSIAN, L, self.beta(L), self.lam, self.gamma)


def fit_substitution(dataset: Dataset, config: FitConfig) -> FitResult:
    """LSPCA with beta eliminated: MCGD directly on L -> G(L, (XL)^+ Y)."""
    config.validate(dataset)
    start = time.perf_counter()
    X, Y = dataset.X, dataset.Y
    objective = _Objective(X, Y, GAUSSIAN, config.mode)
    opts = _default_mcgd(X, config.mcgd)

    L = pca(X, config.r) if config.L0 is None else np.array(config.L0, dtype=float)
    beta = solve_beta_ls(X, Y, L)
    lam, gamma, nuis = config.lam, config.gamma, None
    if config.mode == MLE:
        nuis = update_params(X, Y, L, beta, 1.0, GAUSSIAN)
        lam, gamma = nuis.lam, nuis.gamma
    trace = [objective(L, beta, lam, gamma, nuis)]
    best = (trace[0], L, beta, lam, gamma, nuis)
    inner_iters = []

    converged = False
    k = 0
    for k in range(1, config.max_outer + 1):
        try:
            if config.mode == MLE and k > 1:
                nuis = update_params(X, Y, L, solve_beta_ls(X, Y, L), gamma, GAUSSIAN)
                lam, gamma = nuis.lam, nuis.gamma
            sub = _SubstitutedCost(X, Y, lam, gamma)
            res = mcgd(CostOracle(sub.value, sub.grad), L, opts)
            L = res.L
            beta = solve_beta_ls(X, Y, L)
            value = objective(L, beta, lam, gamma, nuis)
        except (OptimizationError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise FitError(f"outer iteration {k}: {exc}") from exc
        inner_iters.append(res.iterations)
        _check_monotone(trace[-1], value, k)
        trace.append(value)
        if config.callback is not None:
            config.callback(k, L, beta, value)
        if value <= best[0]:
            best = (value, L, beta, lam, gamma, nuis)
        if _relative_change(trace[-2], value) <= config.outer_tol:
            converged = True
            break

    _, L, beta, lam, gamma, nuis = best
    info = {"inner_iterations": inner_iters}
    return _result(dataset, config, L, beta, lam, gamma, nuis, trace, converged, k, start, info)


def fit(dataset: Dataset, config: FitConfig) -> FitResult:
    if config.algorithm == "substitution":
        return fit_substitution(dataset, config)
    return fit_alternating(dataset, config)

