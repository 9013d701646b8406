"""Prediction metrics and the 1-D principal-component projection."""

from __future__ import annotations

import numpy as np


def n_step_mse(predictions: np.ndarray, truth: np.ndarray, n: int) -> float:
    """Mean squared error over the first n predicted states, all dims."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if predictions.shape != truth.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {truth.shape}")
    if n > predictions.shape[0]:
        raise ValueError(f"n={n} exceeds {predictions.shape[0]} available states")
    diff = predictions[:n] - truth[:n]
    return float(np.mean(diff * diff))


def rollout_mse(predict_block, start_block: np.ndarray, truth: np.ndarray, horizon: int) -> float:
    """Autoregressive multi-block prediction error.

    predict_block maps one flattened state block to the next; each prediction
    feeds the next call. truth holds the ground-truth states (horizon, d).
    A non-finite prediction reports +inf (a divergent rollout is a valid
    outcome, not an error).
    """
    truth = np.asarray(truth, dtype=np.float64)
    block = np.asarray(start_block, dtype=np.float64)
    n = block.shape[0]
    if horizon % n != 0:
        raise ValueError(f"horizon {horizon} is not a multiple of block length {n}")
    if truth.shape[0] != horizon:
        raise ValueError(f"truth has {truth.shape[0]} states, expected {horizon}")
    preds = np.empty((horizon, truth.shape[1]))
    for b in range(horizon // n):
        block = np.asarray(predict_block(block), dtype=np.float64).reshape(n, -1)
        if not np.all(np.isfinite(block)):
            return float("inf")
        preds[b * n : (b + 1) * n] = block
    diff = preds - truth
    return float(np.mean(diff * diff))


def pca_1d(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Dominant principal axis by power iteration and the 1-D projections.

    Vectors are mean-centered; the covariance uses the population (1/n)
    convention so the projection variance equals the top eigenvalue. The
    axis sign is fixed so the first nonzero projection is non-negative.
    Zero covariance degenerates to zero projections on the first basis axis.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need at least two vectors, got shape {x.shape}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    d = cov.shape[0]
    if not np.any(cov):
        return np.zeros(x.shape[0]), np.eye(d)[0]
    v = cov[:, int(np.argmax(np.diag(cov)))].copy()
    norm = np.linalg.norm(v)
    v = np.ones(d) / np.sqrt(d) if norm == 0 else v / norm
    for _ in range(200):
        nxt = cov @ v
        norm = np.linalg.norm(nxt)
        if norm == 0:
            break
        nxt /= norm
        if np.linalg.norm(nxt - v) < 1e-10:
            v = nxt
            break
        v = nxt
    proj = centered @ v
    nonzero = np.flatnonzero(proj)
    if nonzero.size and proj[nonzero[0]] < 0:
        v = -v
        proj = -proj
    return proj, v
