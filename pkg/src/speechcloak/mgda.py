"""Minimum-norm point in the convex hull of task gradients.

Given per-task gradients g_1..g_n, finds simplex weights alpha minimizing
||sum_i alpha_i g_i||^2. The combined vector is a common descent direction
for all tasks whenever one exists; its norm never exceeds the norm of any
single gradient. n = 2 has a closed form; larger n uses Frank-Wolfe over
the simplex with exact line search, which only ever touches the n-by-n
Gram matrix.
"""

from __future__ import annotations

import numpy as np


def _pair_weight(g1: np.ndarray, g2: np.ndarray) -> float:
    """Weight on g1 minimizing ||t*g1 + (1-t)*g2|| over t in [0, 1]."""
    diff = g1 - g2
    denom = float(np.dot(diff, diff))
    if denom == 0.0:
        return 0.5
    return float(np.clip(np.dot(g2 - g1, g2) / denom, 0.0, 1.0))


def _frank_wolfe_weights(gram: np.ndarray, max_iter: int, tol: float) -> np.ndarray:
    n = gram.shape[0]
    alpha = np.zeros(n)
    alpha[int(np.argmin(np.diag(gram)))] = 1.0  # start at the shortest vertex
    sq_norm = float(alpha @ gram @ alpha)
    for _ in range(max_iter):
        grad = gram @ alpha
        j = int(np.argmin(grad))
        direction = -alpha.copy()
        direction[j] += 1.0
        curvature = float(direction @ gram @ direction)
        if curvature <= 0.0:
            break
        step = float(np.clip(-(alpha @ gram @ direction) / curvature, 0.0, 1.0))
        if step == 0.0:
            break
        alpha = alpha + step * direction
        new_sq_norm = float(alpha @ gram @ alpha)
        if sq_norm - new_sq_norm < tol:
            sq_norm = new_sq_norm
            break
        sq_norm = new_sq_norm
    return alpha


def min_norm_point(
    gradients,
    solver: str = "auto",
    max_iter: int = 200,
    tol: float = 1e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """Simplex weights and the weighted gradient combination they produce.

    Parameters
    ----------
    gradients : sequence of equally-shaped arrays
    solver : "auto" (closed form up to n=2, Frank-Wolfe beyond),
        "closed-form" (n <= 2 only) or "frank-wolfe"

    Returns
    -------
    (alpha, combined) where alpha is non-negative, sums to one, and
    combined = sum_i alpha_i * gradients_i.
    """
    mats = [np.asarray(g, dtype=np.float64) for g in gradients]
    if not mats:
        raise ValueError("need at least one gradient")
    flat = np.stack([g.ravel() for g in mats])
    if not np.all(np.isfinite(flat)):
        raise ValueError("non-finite gradient input")
    n = len(mats)

    if n == 1:
        alpha = np.array([1.0])
    elif n == 2 and solver in ("auto", "closed-form"):
        t = _pair_weight(flat[0], flat[1])
        alpha = np.array([t, 1.0 - t])
    elif solver == "closed-form":
        raise ValueError("closed-form solver only handles up to two gradients")
    else:
        alpha = _frank_wolfe_weights(flat @ flat.T, max_iter, tol)

    alpha = np.maximum(alpha, 0.0)
    alpha = alpha / alpha.sum()
    combined = (alpha @ flat).reshape(mats[0].shape)
    return alpha, combined


def demo_records(tasks: int, dim: int, draws: int = 1, seed: int = 0) -> list[dict]:
    """Diagnostic draws: weights, vertex norms and the dominance margin.

    The margin min_i ||g_i|| - ||combined|| is non-negative up to solver
    tolerance; a materially negative value would indicate a solver bug.
    """
    rng = np.random.default_rng(seed)
    records = []
    for draw in range(draws):
        grads = [rng.normal(size=dim) for _ in range(tasks)]
        alpha, combined = min_norm_point(grads)
        vertex_norms = [float(np.linalg.norm(g)) for g in grads]
        combined_norm = float(np.linalg.norm(combined))
        records.append(
            {
                "draw": draw,
                "alpha": [float(a) for a in alpha],
                "vertex_norms": vertex_norms,
                "combined_norm": combined_norm,
                "dominance_margin": min(vertex_norms) - combined_norm,
            }
        )
    return records
