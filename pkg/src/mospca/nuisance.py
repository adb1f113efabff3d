"""Nuisance parameters: closed-form maximum-likelihood updates and the
fixed-gamma rescaling used when lambda is chosen by cross-validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import GAUSSIAN, gamma_from, lambda_from

CV = "cv"
MLE = "mle"
MODES = (CV, MLE)

# gamma_prev above this counts as positive (alpha > 0 branch)
GAMMA_POSITIVE = 1e-15


class DegenerateNoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NuisanceEstimate:
    gamma: float
    lam: float
    sigma_x2: float
    alpha: float
    sigma_y2: float | None = None


def update_params(X, Y, L, beta, gamma_prev: float, family: str) -> NuisanceEstimate:
    """One pass of the ML nuisance updates at fixed (L, beta).

    sigma_x2 is set first, using the alpha > 0 form whenever the previous gamma
    is positive; alpha, gamma, and (gaussian) sigma_y2 and lambda follow.
    """
    n, p = X.shape
    r = L.shape[1]
    if r >= p:
        raise DegenerateNoiseError("maximum-likelihood updates need r < p")
    q = Y.shape[1]
    total = float(np.sum(X * X))
    XL = X @ L
    captured = float(np.sum(XL * XL))

    if gamma_prev > GAMMA_POSITIVE:
        sigma_x2 = (total - captured) / (n * (p - r))
    else:
        sigma_x2 = total / (n * p)
    if not sigma_x2 > 0:
        raise DegenerateNoiseError("degenerate noise estimate: sigma_x^2 = 0")
    alpha = max(captured / (n * r) - sigma_x2, 0.0)
    gamma = gamma_from(sigma_x2, alpha)

    sigma_y2 = None
    if family == GAUSSIAN:
        R = Y - XL @ beta
        sigma_y2 = float(np.sum(R * R)) / (n * q)
        if not sigma_y2 > 0:
            raise DegenerateNoiseError("degenerate noise estimate: sigma_y^2 = 0")
    lam = lambda_from(family, sigma_x2, sigma_y2)
    return NuisanceEstimate(gamma, lam, sigma_x2, alpha, sigma_y2)


def cv_equivalent_lambda(lam: float, gamma: float) -> float:
    """lambda' such that lambda' ||X - XLL'||^2 and lambda ||X - gamma XLL'||^2
    differ by a constant in L (for orthonormal L)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    return lam * gamma * (2.0 - gamma)
