"""Kernel variants: Gram matrices, double centering, kernel PCA, and kernel
LSPCA/LRPCA obtained by fitting on the centered Gram matrix in place of X."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import Centering, Dataset, variation_explained
from .models import ModelParams, family_for, solve_beta
from .solvers import FitConfig, FitResult, fit

RBF = "rbf"
LINEAR = "linear"
BANDWIDTH_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelSpec:
    kind: str = RBF
    bandwidth: float | None = None  # rbf: k(x, y) = exp(-||x - y||^2 / (2 bandwidth^2))

    def __post_init__(self):
        if self.kind not in (RBF, LINEAR):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == RBF and self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("rbf bandwidth must be positive")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        if self.kind == RBF and self.bandwidth is None:
            return replace(self, bandwidth=median_distance(X))
        return self


def median_distance(X: np.ndarray) -> float:
    d = pdist(X)
    med = float(np.median(d)) if d.size else 1.0
    return med if med > 0 else 1.0


def bandwidth_grid(X: np.ndarray, factors=BANDWIDTH_FACTORS) -> list[float]:
    med = median_distance(X)
    return [med * f for f in factors]


def gram(X_rows: np.ndarray, spec: KernelSpec, Y_rows: np.ndarray | None = None) -> np.ndarray:
    """K_ij = k(x_i, y_j); Y_rows defaults to X_rows."""
    X_rows = np.atleast_2d(X_rows)
    other = X_rows if Y_rows is None else np.atleast_2d(Y_rows)
    if spec.kind == LINEAR:
        return X_rows @ other.T
    if spec.bandwidth is None or not spec.bandwidth > 0:
        raise ValueError("rbf bandwidth must be positive")
    D2 = cdist(X_rows, other, "sqeuclidean")
    K = np.exp(-D2 / (2.0 * spec.bandwidth**2))
    if Y_rows is None:
        K = 0.5 * (K + K.T)
    return K


@dataclass(frozen=True)
class CenteredKernel:
    """HKH plus the training aggregates needed to center out-of-sample rows."""

    K: np.ndarray  # centered n x n Gram matrix
    row_means: np.ndarray  # means of the uncentered K rows
    grand_mean: float
    X_train: np.ndarray | None = None
    spec: KernelSpec | None = None

    def center_rows(self, K_new: np.ndarray) -> np.ndarray:
        """Center cross-kernel rows k(x_new, x_j) with the training aggregates."""
        K_new = np.atleast_2d(K_new)
        return K_new - K_new.mean(axis=1, keepdims=True) - self.row_means[None, :] + self.grand_mean

    def project(self, X_new: np.ndarray, L: np.ndarray) -> np.ndarray:
        return project_new(self, L, X_new)


def center_gram(K: np.ndarray, X_train=None, spec: KernelSpec | None = None) -> CenteredKernel:
    row_means = K.mean(axis=1)
    grand = float(row_means.mean())
    Kc = K - row_means[:, None] - K.mean(axis=0)[None, :] + grand
    Kc = 0.5 * (Kc + Kc.T)
    return CenteredKernel(Kc, row_means, grand, X_train, spec)


def kpca(Kc, r: int) -> np.ndarray:
    """Unit eigenvectors of the centered Gram matrix for its r largest eigenvalues."""
    K = Kc.K if isinstance(Kc, CenteredKernel) else Kc
    w, V = np.linalg.eigh(K)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    if r > len(w) or w[r - 1] < 1e-10 * max(w[0], 1e-300):
        raise ValueError(f"r = {r} exceeds the numerical rank of the centered kernel")
    L = V[:, :r].copy()
    pivots = np.argmax(np.abs(L), axis=0)
    L *= np.sign(L[pivots, np.arange(r)])
    return L


def project_new(ck: CenteredKernel, L: np.ndarray, x_new) -> np.ndarray:
    """Centered kernel row of x_new against the training inputs, times L.

    x_new is in the (centered) input space the kernel was built on; a single
    vector gives an r-vector, a matrix gives one row per input.
    """
    x = np.asarray(x_new, dtype=float)
    single = x.ndim == 1
    K_new = gram(np.atleast_2d(x), ck.spec, ck.X_train)
    out = ck.center_rows(K_new) @ L
    return out[0] if single else out


def kernel_dataset(dataset: Dataset, ck: CenteredKernel) -> Dataset:
    """The dataset with X replaced by the centered Gram matrix (so p = n)."""
    c = dataset.centering
    centering = Centering(c.task, np.zeros(dataset.n), None, c.y_mean, c.classes)
    return Dataset(ck.K, dataset.Y, dataset.task, centering)


def build_kernel(dataset: Dataset, spec: KernelSpec) -> CenteredKernel:
    spec = spec.resolved(dataset.X)
    return center_gram(gram(dataset.X, spec), dataset.X, spec)


def fit_kernel_spca(dataset: Dataset, spec: KernelSpec, config: FitConfig) -> FitResult:
    """kLSPCA / kLRPCA: the linear solvers run on (centered Gram, Y).

    L is n x r with orthonormal columns; any column scaling relative to the
    unit-norm kPCA components is absorbed by beta.
    """
    ck = build_kernel(dataset, spec)
    result = fit(kernel_dataset(dataset, ck), config)
    result.centering = dataset.centering
    result.kernel = ck
    result.method = "k" + config.method
    return result


def kpcr_kpcc(dataset: Dataset, spec: KernelSpec, r: int, reg: float = 0.0) -> FitResult:
    start = time.perf_counter()
    ck = build_kernel(dataset, spec)
    L = kpca(ck, r)
    beta = solve_beta(family_for(dataset.task), ck.K, dataset.Y, L, reg)
    return FitResult(
        params=ModelParams(L, beta, lam=np.inf, gamma=1.0),
        Z=ck.K @ L,
        nll_trace=[],
        variation_explained=variation_explained(ck.K, L),
        converged=True,
        iterations=0,
        wall_time=time.perf_counter() - start,
        method="kpcr" if dataset.task == "regression" else "kpcc",
        mode="none",
        centering=dataset.centering,
        kernel=ck,
    )
