"""Grassmann manifold geometry and conjugate gradient descent along geodesics.

Points are p x r matrices with orthonormal columns; only the spanned subspace
matters to the costs optimized here. Tangent vectors at L are p x r matrices
N with L'N = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-8


class OptimizationError(RuntimeError):
    """Non-finite cost/gradient or an unrecoverable line search failure."""


@dataclass(frozen=True)
class CostOracle:
    """A cost over the Grassmannian and its Euclidean gradient dG/dL."""

    value: Callable[[np.ndarray], float]
    euclidean_grad: Callable[[np.ndarray], np.ndarray]


@dataclass
class MCGDOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6
    rel_tol: float = 1e-10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 50
    # called as callback(k, L, value) for every accepted iterate, k = 0 included
    callback: Callable[[int, np.ndarray, float], None] | None = None


@dataclass
class MCGDResult:
    L: np.ndarray
    trace: list[float]
    iterations: int
    converged: bool
    grad_norm: float
    resets: int = 0
    reason: str = ""


def inner(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.sum(A * B))


def orthonormality_error(L: np.ndarray) -> float:
    return float(np.linalg.norm(L.T @ L - np.eye(L.shape[1])))


def orthonormalize(L: np.ndarray) -> np.ndarray:
    """QR with the diagonal of R forced positive, so the result is deterministic."""
    Q, R = np.linalg.qr(L)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def random_point(p: int, r: int, rng: np.random.Generator) -> np.ndarray:
    return orthonormalize(rng.standard_normal((p, r)))


def tangent_project(L: np.ndarray, M: np.ndarray) -> np.ndarray:
    """(I - LL')M without forming the p x p projector."""
    if L.shape != M.shape:
        raise ValueError(f"shape mismatch {L.shape} vs {M.shape}")
    return M - L @ (L.T @ M)


def random_tangent(L: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    N = tangent_project(L, rng.standard_normal(L.shape))
    return N / np.linalg.norm(N)


def chordal_distance(L1: np.ndarray, L2: np.ndarray) -> float:
    """||L1L1' - L2L2'||_F / sqrt(2) for equal-dimension subspaces.

    Evaluated as ||(I - L1L1')L2||_F, which is the same quantity and avoids
    cancellation for nearby subspaces.
    """
    return float(np.linalg.norm(L2 - L1 @ (L1.T @ L2)))


def geodesic_factors(C: np.ndarray):
    U, S, Vt = np.linalg.svd(C, full_matrices=False)
    return U, S, Vt


def geodesic_step(L: np.ndarray, C: np.ndarray, t: float, factors=None) -> np.ndarray:
    """Follow the geodesic from L with initial velocity C for time t.

    L(t) = L V cos(S t) V' + U sin(S t) V' with C = U S V' the compact SVD.
    """
    U, S, Vt = factors if factors is not None else geodesic_factors(C)
    V = Vt.T
    out = (L @ V * np.cos(S * t) + U * np.sin(S * t)) @ Vt
    if orthonormality_error(out) > ORTHO_TOL:
        out = orthonormalize(out)
    return out


def riemannian_grad(cost: CostOracle, L: np.ndarray) -> np.ndarray:
    return tangent_project(L, cost.euclidean_grad(L))


def _check_finite(value, what: str, k: int):
    if not np.all(np.isfinite(value)):
        raise OptimizationError(f"non-finite {what} at iteration {k}")


def _armijo(cost, L, f, slope, factors, t0, opts):
    """Backtrack from t0 until sufficient decrease; returns (t, L_new, f_new) or None."""
    t = t0
    for _ in range(opts.max_backtracks + 1):
        L_new = geodesic_step(L, None, t, factors)
        f_new = float(cost.value(L_new))
        if np.isfinite(f_new) and f_new <= f + opts.armijo * t * slope:
            return t, L_new, f_new
        t *= opts.shrink
    return None


def mcgd(cost: CostOracle, L0: np.ndarray, opts: MCGDOptions | None = None) -> MCGDResult:
    """Minimize a Grassmann cost by conjugate gradient along geodesics.

    Search directions are parallel transported along each geodesic step and
    combined Polak-Ribiere style. The direction resets to steepest descent
    every r(p - r) iterations, and whenever it fails to be a descent direction.
    Step sizes come from Armijo backtracking, starting at twice the previous
    accepted step (capped at a quarter turn of the fastest-rotating plane).
    """
    opts = opts or MCGDOptions()
    L = np.array(L0, dtype=float)
    if orthonormality_error(L) > ORTHO_TOL:
        L = orthonormalize(L)
    p, r = L.shape
    period = max(r * (p - r), 1)

    f = float(cost.value(L))
    _check_finite(f, "objective", 0)
    G = riemannian_grad(cost, L)
    _check_finite(G, "gradient", 0)
    trace = [f]
    if opts.callback is not None:
        opts.callback(0, L, f)

    gnorm = math.sqrt(inner(G, G))
    if gnorm <= opts.grad_tol:
        return MCGDResult(L, trace, 0, True, gnorm, reason="gradient")

    C = -G
    t_prev = None
    resets = 0
    for k in range(opts.max_iters):
        slope = inner(G, C)
        if not slope < 0:
            C = -G
            slope = -gnorm * gnorm
            resets += 1
        factors = geodesic_factors(C)
        S = factors[1]
        quarter = (math.pi / 2) / S[0]
        t0 = quarter / 2 if t_prev is None else min(2 * t_prev, quarter)

        found = _armijo(cost, L, f, slope, factors, t0, opts)
        if found is None and not np.allclose(C, -G):
            log.debug("line search failed on conjugate direction at %d; using -grad", k)
            C = -G
            slope = -gnorm * gnorm
            resets += 1
            factors = geodesic_factors(C)
            S = factors[1]
            quarter = (math.pi / 2) / S[0]
            found = _armijo(cost, L, f, slope, factors, quarter / 2, opts)
        if found is None:
            # at the floating-point floor of the objective no step can decrease it
            if gnorm <= 1e3 * opts.grad_tol or _flat(cost, L, f, factors, quarter):
                return MCGDResult(L, trace, k, True, gnorm, resets, reason="stalled")
            raise OptimizationError(f"line search failed at iteration {k}")
        t, L_new, f_new = found
        _check_finite(f_new, "objective", k + 1)

        G_new = riemannian_grad(cost, L_new)
        _check_finite(G_new, "gradient", k + 1)

        # parallel transport of the old direction and gradient along the geodesic
        U, S, Vt = factors
        V = Vt.T
        sin, cos = np.sin(S * t), np.cos(S * t)
        C_tr = ((-L @ V) * sin + U * cos) * S @ Vt
        A = (L @ V) * sin
        B = U * (1.0 - cos)
        G_tr = G - (A + B) @ (U.T @ G)

        gg = inner(G, G)
        d = 0.0 if gg < 1e-300 else inner(G_new - G_tr, G_new) / gg
        C_new = -G_new + d * tangent_project(L_new, C_tr)
        if k % period == 0:
            C_new = -G_new
            resets += 1

        rel = abs(f - f_new) / max(abs(f), 1e-300)
        L, f, G, C, t_prev = L_new, f_new, G_new, C_new, t
        gnorm = math.sqrt(inner(G, G))
        trace.append(f)
        if opts.callback is not None:
            opts.callback(k + 1, L, f)
        if gnorm <= opts.grad_tol:
            return MCGDResult(L, trace, k + 1, True, gnorm, resets, reason="gradient")
        if rel <= opts.rel_tol:
            return MCGDResult(L, trace, k + 1, True, gnorm, resets, reason="objective")

    return MCGDResult(L, trace, opts.max_iters, False, gnorm, resets, reason="max_iters")


def _flat(cost, L, f, factors, quarter) -> bool:
    """True when the cost is constant to rounding along tiny steps of the direction."""
    for t in (quarter * 1e-6, quarter * 1e-9):
        if abs(float(cost.value(geodesic_step(L, None, t, factors))) - f) > 1e-13 * max(abs(f), 1.0):
            return False
    return True
