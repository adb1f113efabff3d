"""Draws from the generative model x ~ N(0, sigma_x2 I + alpha L L'),
y | x ~ N(beta' L' x, sigma_y2 I) (gaussian) or a softmax of beta' L' x."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grassmann import random_point
from .models import softmax


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 500
    p: int = 20
    r: int = 3
    q: int = 1
    sigma_x2: float = 1.0
    alpha: float = 25.0
    sigma_y2: float = 0.01
    classification: bool = False
    seed: int = 0


@dataclass(frozen=True)
class SyntheticData:
    X: np.ndarray  # raw rows, not centered
    y: np.ndarray  # (n, q) responses, or (n,) integer labels
    L: np.ndarray
    beta: np.ndarray


def generate(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    L = random_point(spec.p, spec.r, rng)
    beta = rng.standard_normal((spec.r, spec.q)) / np.sqrt(spec.sigma_x2 + spec.alpha)
    if spec.classification:
        beta *= 1.5
    # x = sqrt(sigma_x2) e + sqrt(alpha) L u gives covariance sigma_x2 I + alpha LL'
    E = rng.standard_normal((spec.n, spec.p))
    U = rng.standard_normal((spec.n, spec.r))
    X = np.sqrt(spec.sigma_x2) * E + np.sqrt(spec.alpha) * U @ L.T
    F = X @ L @ beta
    if spec.classification:
        P = softmax(F)
        u = rng.random((spec.n, 1))
        y = np.minimum((P.cumsum(axis=1) < u).sum(axis=1), spec.q - 1)
    else:
        y = F + np.sqrt(spec.sigma_y2) * rng.standard_normal(F.shape)
    return SyntheticData(X, y, L, beta)
