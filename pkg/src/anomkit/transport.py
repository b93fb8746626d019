"""Entropic-regularized optimal transport between token distributions.

The cost matrix is the pairwise cosine distance between token
embeddings; the coupling is solved with log-domain-stabilized
Sinkhorn-Knopp iterations, which stay finite for arbitrarily small
regularization strengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError


def cost_matrix(model_vectors: np.ndarray, expert_vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine distance, entries in [0, 2].

    Rows or columns backed by a zero-norm embedding have no defined
    cosine; their distance is fixed at 1, the midpoint of the range.
    """
    a = np.asarray(model_vectors, dtype=float)
    b = np.asarray(expert_vectors, dtype=float)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("embedding matrices must be 2-D")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}"
        )
    a_norms = np.linalg.norm(a, axis=1)
    b_norms = np.linalg.norm(b, axis=1)
    a_zero = a_norms == 0
    b_zero = b_norms == 0
    a_unit = a / np.where(a_zero, 1.0, a_norms)[:, None]
    b_unit = b / np.where(b_zero, 1.0, b_norms)[:, None]
    costs = 1.0 - a_unit @ b_unit.T
    costs[a_zero, :] = 1.0
    costs[:, b_zero] = 1.0
    return np.clip(costs, 0.0, 2.0)


@dataclass(frozen=True)
class TransportResult:
    """Coupling plan with its cost and convergence diagnostics."""

    plan: np.ndarray
    distance: float
    reg: float
    iterations: int
    marginal_residual: float
    converged: bool


def _logsumexp(values: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(values, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(peak, axis=axis) + np.log(
            np.sum(np.exp(values - peak), axis=axis)
        )


def _check_marginal(name: str, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DataError(f"{name} must be a non-empty 1-D weight vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DataError(f"{name} must be non-negative and finite")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise DataError(f"{name} must sum to 1, got {float(w.sum())!r}")
    return w


def sinkhorn(
    costs: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    reg: float = 0.05,
    max_iter: int = 1000,
    tol: float = 1e-6,
) -> TransportResult:
    """Approximate optimal transport under entropic regularization.

    Alternates log-domain scaling updates until the worst marginal
    violation drops to ``tol`` or ``max_iter`` is reached; a
    non-converged run is returned with its residual rather than raised.
    The reported distance is <plan, costs>, which approaches the exact
    transport cost as ``reg`` shrinks.
    """
    if reg <= 0:
        raise ConfigError(f"regularization must be > 0, got {reg}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2:
        raise ShapeError("cost matrix must be 2-D")
    if not np.all(np.isfinite(c)):
        raise DataError("cost matrix must be finite")
    u = _check_marginal("u", u)
    v = _check_marginal("v", v)
    if c.shape != (u.size, v.size):
        raise ShapeError(
            f"cost matrix shape {c.shape} does not match marginals ({u.size}, {v.size})"
        )

    scaled = -c / reg
    with np.errstate(divide="ignore"):
        log_u = np.log(u)
        log_v = np.log(v)
    f = np.zeros(u.size)
    g = np.zeros(v.size)
    iterations = 0
    residual = np.inf
    for iterations in range(1, max_iter + 1):
        g = log_v - _logsumexp(scaled + f[:, None], axis=0)
        f = log_u - _logsumexp(scaled + g[None, :], axis=1)
        plan = np.exp(scaled + f[:, None] + g[None, :])
        residual = max(
            float(np.max(np.abs(plan.sum(axis=1) - u))),
            float(np.max(np.abs(plan.sum(axis=0) - v))),
        )
        if residual <= tol:
            break
    plan = np.exp(scaled + f[:, None] + g[None, :])
    distance = float(np.sum(plan * c))
    return TransportResult(
        plan=plan,
        distance=distance,
        reg=reg,
        iterations=iterations,
        marginal_residual=residual,
        converged=residual <= tol,
    )
