"""LSPCA / LRPCA objectives, gradients in L, coefficient solvers and prediction.

The working objective for a fixed (lam, gamma) is

    G(L, beta) = loss(Y, XL beta) + lam * ||X - gamma X L L'||_F^2

with loss the squared error (gaussian family) or the multinomial negative
log-likelihood (categorical family). The full negative log-likelihood of the
generative model x ~ N(0, sx2 I + alpha LL') adds the log-determinant terms
and the response-noise terms; see :func:`nll`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .data import CLASSIFICATION, REGRESSION, Centering, Dataset

GAUSSIAN = "gaussian"
CATEGORICAL = "categorical"


class SeparableDataError(RuntimeError):
    """Logistic coefficients diverge because the classes are separable."""


def family_for(task: str) -> str:
    return GAUSSIAN if task == REGRESSION else CATEGORICAL


def gamma_from(sigma_x2: float, alpha: float) -> float:
    return 1.0 - math.sqrt(sigma_x2 / (sigma_x2 + alpha))


def lambda_from(family: str, sigma_x2: float, sigma_y2: float | None = None) -> float:
    if family == GAUSSIAN:
        return sigma_y2 / sigma_x2
    return 1.0 / (2.0 * sigma_x2)


@dataclass(frozen=True)
class ModelParams:
    L: np.ndarray
    beta: np.ndarray
    lam: float
    gamma: float = 1.0
    sigma_x2: float | None = None
    alpha: float | None = None
    sigma_y2: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    @classmethod
    def from_nuisance(cls, L, beta, family, sigma_x2, alpha, sigma_y2=None):
        return cls(
            L,
            beta,
            lambda_from(family, sigma_x2, sigma_y2),
            gamma_from(sigma_x2, alpha),
            sigma_x2,
            alpha,
            sigma_y2 if family == GAUSSIAN else None,
        )

    def rotated(self, Q: np.ndarray) -> "ModelParams":
        return replace(self, L=self.L @ Q, beta=Q.T @ self.beta)


# -- response families -------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def response_loss(family: str, Y: np.ndarray, F: np.ndarray) -> float:
    """Squared error, or categorical NLL of one-hot Y under logits F."""
    if family == GAUSSIAN:
        R = Y - F
        return float(np.sum(R * R))
    return float(-np.sum(Y * log_softmax(F)))


def response_loss_grad(family: str, Y: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Derivative of :func:`response_loss` with respect to the fitted values F."""
    if family == GAUSSIAN:
        return -2.0 * (Y - F)
    return softmax(F) - Y


# -- objective and gradient --------------------------------------------------


def pca_term(X: np.ndarray, L: np.ndarray, gamma: float) -> float:
    """||X - gamma X L L'||_F^2 (valid for any L, orthonormal or not)."""
    R = X - gamma * (X @ L) @ L.T
    return float(np.sum(R * R))


def _check(value, what):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite {what}")
    return value


def cv_objective(X, Y, family, L, beta, lam, gamma) -> float:
    return _check(response_loss(family, Y, X @ L @ beta) + lam * pca_term(X, L, gamma), "objective")


def cv_grad_L(X, Y, family, L, beta, lam, gamma) -> np.ndarray:
    """Euclidean dG/dL of :func:`cv_objective` at fixed beta."""
    XL = X @ L
    dF = response_loss_grad(family, Y, XL @ beta)
    grad = X.T @ (dF @ beta.T)
    # d/dL ||X - g XLL'||^2 = -4g X'XL + 2g^2 (X'XL L'L + L L'X'XL)
    XtXL = X.T @ XL
    grad += lam * (-4.0 * gamma * XtXL + 2.0 * gamma**2 * (XtXL @ (L.T @ L) + L @ (XL.T @ XL)))
    return _check(grad, "gradient")


def nll(params: ModelParams, dataset: Dataset, mode: str = "cv") -> float:
    """Objective value of params on dataset.

    ``mode="cv"`` gives loss + lam ||X - gamma XLL'||^2 with the caller's
    (lam, gamma). ``mode="mle"`` gives the full negative log-likelihood up to
    the (np + nq)/2 log(2 pi) constant (the Gaussian family adds
    ||Y - XL beta||^2 / (2 sy2) + nq/2 log sy2; the categorical family adds
    the multinomial NLL).
    """
    X, Y, L, beta = dataset.X, dataset.Y, params.L, params.beta
    family = family_for(dataset.task)
    if mode == "cv":
        return cv_objective(X, Y, family, L, beta, params.lam, params.gamma)
    if mode != "mle":
        raise ValueError(f"unknown mode {mode!r}")
    return full_nll(X, Y, family, L, beta, params.sigma_x2, params.alpha, params.sigma_y2)


def full_nll(X, Y, family, L, beta, sigma_x2, alpha, sigma_y2=None) -> float:
    if sigma_x2 is None or not sigma_x2 > 0:
        raise ValueError("sigma_x2 must be positive")
    if alpha is None or alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n, p = X.shape
    r = L.shape[1]
    q = Y.shape[1]
    gamma = gamma_from(sigma_x2, alpha)
    value = pca_term(X, L, gamma) / (2 * sigma_x2)
    value += 0.5 * (n * (p - r) * math.log(sigma_x2) + n * r * math.log(sigma_x2 + alpha))
    loss = response_loss(family, Y, X @ L @ beta)
    if family == GAUSSIAN:
        if sigma_y2 is None or not sigma_y2 > 0:
            raise ValueError("sigma_y2 must be positive")
        value += loss / (2 * sigma_y2) + 0.5 * n * q * math.log(sigma_y2)
    else:
        value += loss
    return _check(value, "negative log-likelihood")


def euclidean_grad_L(params: ModelParams, dataset: Dataset) -> np.ndarray:
    return cv_grad_L(
        dataset.X, dataset.Y, family_for(dataset.task), params.L, params.beta, params.lam, params.gamma
    )


# -- coefficient subproblems -------------------------------------------------


def solve_beta_ls(X: np.ndarray, Y: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Least-squares beta for features XL.

    Cholesky on the normal equations when they are well conditioned, else the
    minimum-norm pseudoinverse solution.
    """
    Z = X @ L
    gram = Z.T @ Z
    if np.linalg.cond(gram) < 1e12:
        try:
            return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), Z.T @ Y)
        except np.linalg.LinAlgError:
            pass
    return np.linalg.pinv(Z) @ Y


def _lr_objective(Z, Y, W, reg):
    F = np.hstack([Z @ W, np.zeros((Z.shape[0], 1))])
    return float(-np.sum(Y * log_softmax(F))) + 0.5 * reg * float(np.sum(W * W)), F


def fit_multinomial(
    Z: np.ndarray,
    Y: np.ndarray,
    reg: float = 0.0,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> np.ndarray:
    """Damped Newton for multinomial logistic regression on features Z.

    The last class column of the returned r x q coefficient is pinned to 0.
    """
    n, r = Z.shape
    q = Y.shape[1]
    m = q - 1
    W = np.zeros((r, m))
    if m == 0:
        return np.zeros((r, q))
    f, F = _lr_objective(Z, Y, W, reg)
    for _ in range(max_iter):
        P = softmax(F)[:, :m]
        g = Z.T @ (P - Y[:, :m]) + reg * W
        if np.linalg.norm(g) <= tol:
            break
        # H[(a,j),(b,k)] = sum_i z_ia z_ib (delta_jk p_ij - p_ij p_ik)
        H = np.einsum("ia,ib,ij,jk->ajbk", Z, Z, P, np.eye(m))
        H -= np.einsum("ia,ib,ij,ik->ajbk", Z, Z, P, P)
        H = H.reshape(r * m, r * m) + reg * np.eye(r * m)
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), g.ravel())
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-8 * np.eye(r * m), g.ravel())
        step = step.reshape(r, m)
        slope = -float(np.sum(g * step))
        t = 1.0
        while True:
            W_new = W - t * step
            f_new, F_new = _lr_objective(Z, Y, W_new, reg)
            if f_new <= f + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if f_new > f:
            break
        W, f, F = W_new, f_new, F_new
        if np.linalg.norm(W) > 1e6:
            break
    if reg == 0 and (np.linalg.norm(W) > 1e6 or f < 1e-8 * n):
        raise SeparableDataError(
            "logistic coefficients diverge (classes are separable in the reduced "
            "features); use a positive ridge term reg > 0"
        )
    return np.hstack([W, np.zeros((r, 1))])


def solve_beta_lr(X: np.ndarray, Y: np.ndarray, L: np.ndarray, reg: float = 0.0) -> np.ndarray:
    return fit_multinomial(X @ L, Y, reg)


def solve_beta(family, X, Y, L, reg=0.0):
    if family == GAUSSIAN:
        return solve_beta_ls(X, Y, L)
    return solve_beta_lr(X, Y, L, reg)


# -- prediction --------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    Z: np.ndarray
    values: np.ndarray | None = None  # regression, original response scale
    proba: np.ndarray | None = None  # classification
    labels: np.ndarray | None = None  # classification, original class labels


def predict_from_embedding(Z: np.ndarray, beta: np.ndarray, centering: Centering) -> Prediction:
    F = Z @ beta
    if centering.task == CLASSIFICATION:
        proba = softmax(F)
        # argmax returns the lowest index among ties
        labels = centering.classes[np.argmax(proba, axis=1)]
        return Prediction(Z, proba=proba, labels=labels)
    return Prediction(Z, values=F + centering.y_mean)


def predict(params: ModelParams, X_new_raw, centering: Centering) -> Prediction:
    """Predict for raw rows, centered with the training means in ``centering``."""
    X = centering.apply_x(X_new_raw)
    if X.shape[1] != params.L.shape[0]:
        raise ValueError(f"expected {params.L.shape[0]} features, got {X.shape[1]}")
    return predict_from_embedding(X @ params.L, params.beta, centering)
