"""Reference methods: PCA, principal component regression/classification and
closed-form reduced-rank regression."""

from __future__ import annotations

import time
import warnings

import numpy as np

from .data import Dataset, variation_explained
from .models import ModelParams, family_for, solve_beta


def pca(X: np.ndarray, r: int) -> np.ndarray:
    """Top-r right singular vectors of X, largest-magnitude entry of each column positive."""
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    if r > len(s) or (r > 0 and s[r - 1] <= 1e-10 * s[0]):
        raise ValueError(f"r = {r} exceeds the numerical rank of X")
    if r < len(s) and s[r - 1] - s[r] < 1e-10 * s[0]:
        warnings.warn("tied singular values at the subspace boundary; the PCA basis is not unique")
    L = Vt[:r].T.copy()
    pivots = np.argmax(np.abs(L), axis=0)
    L *= np.sign(L[pivots, np.arange(r)])
    return L


def pca_objective(X: np.ndarray, L: np.ndarray) -> float:
    R = X - (X @ L) @ L.T
    return float(np.sum(R * R))


def pcr_pcc(dataset: Dataset, r: int, reg: float = 0.0):
    """PCA subspace followed by least squares (regression) or logistic regression."""
    from .solvers import FitResult

    start = time.perf_counter()
    L = pca(dataset.X, r)
    beta = solve_beta(family_for(dataset.task), dataset.X, dataset.Y, L, reg)
    params = ModelParams(L, beta, lam=np.inf, gamma=1.0)
    return FitResult(
        params=params,
        Z=dataset.X @ L,
        nll_trace=[],
        variation_explained=variation_explained(dataset.X, L),
        converged=True,
        iterations=0,
        wall_time=time.perf_counter() - start,
        method="pcr" if dataset.task == "regression" else "pcc",
        mode="none",
        centering=dataset.centering,
    )


def rrr(X: np.ndarray, Y: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Identity-weighted reduced-rank regression.

    B = B_ols V_r V_r' with V_r the top-r right singular vectors of X B_ols.
    Returned as (L, beta): L an orthonormal basis of the column space of B
    (p x r) and beta = L'B, so that B = L beta.
    """
    B_ols = np.linalg.pinv(X) @ Y
    _, s, Vt = np.linalg.svd(X @ B_ols, full_matrices=False)
    if r > len(s) or s[r - 1] <= 1e-12 * max(s[0], 1e-300):
        raise ValueError(f"fitted values have rank below r = {r}")
    Vr = Vt[:r].T
    B = B_ols @ Vr @ Vr.T
    Q, R = np.linalg.qr(B_ols @ Vr)
    L = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return L, L.T @ B
