"""Ranking losses with analytic gradients.

Both losses take raw vectors and score pairs by inner product. The ``*_grad``
variants return the loss together with gradients for every input, which the
training loops chain into the head parameters.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, logsumexp


def bpr_loss(query_vec, pos_vec, neg_vecs) -> float:
    """``-(1/m) * sum_r log sigmoid(<q, p> - <q, n_r>)``."""
    return bpr_loss_grad(query_vec, pos_vec, neg_vecs)[0]


def bpr_loss_grad(query_vec, pos_vec, neg_vecs):
    q = np.asarray(query_vec, dtype=float)
    p = np.asarray(pos_vec, dtype=float)
    negs = np.atleast_2d(np.asarray(neg_vecs, dtype=float))
    m = negs.shape[0]
    margins = q @ p - negs @ q
    loss = -float(np.mean(log_expit(margins)))
    # d/dmargin of -log sigmoid(x) is -(1 - sigmoid(x))
    w = -(1.0 - expit(margins)) / m
    g_q = w.sum() * p - w @ negs
    g_p = w.sum() * q
    g_n = -w[:, None] * q[None, :]
    return loss, g_q, g_p, g_n


def _positive_nll(logits: np.ndarray) -> np.ndarray:
    """``logsumexp(logits) - logits[..., 0]`` without cancellation when the positive dominates."""
    d = logits[..., 1:] - logits[..., :1]
    m = np.maximum(d.max(axis=-1), 0.0)
    rest = np.exp(d - m[..., None]).sum(axis=-1)
    return np.where(m > 0, m + np.log(np.exp(-m) + rest), np.log1p(rest))


def infonce_loss(anchor_vec, pos_vec, neg_vecs, tau: float = 0.05) -> float:
    """Negative log softmax weight of the positive among positive + negatives at temperature ``tau``."""
    return infonce_loss_grad(anchor_vec, pos_vec, neg_vecs, tau)[0]


def infonce_loss_grad(anchor_vec, pos_vec, neg_vecs, tau: float = 0.05):
    if tau <= 0:
        raise ValueError("tau must be positive")
    a = np.asarray(anchor_vec, dtype=float)
    p = np.asarray(pos_vec, dtype=float)
    negs = np.atleast_2d(np.asarray(neg_vecs, dtype=float))
    cands = np.vstack([p[None, :], negs])
    logits = cands @ a / tau
    lse = logsumexp(logits)
    loss = float(_positive_nll(logits))
    probs = np.exp(logits - lse)
    dlogits = probs.copy()
    dlogits[0] -= 1.0
    dlogits /= tau
    g_a = dlogits @ cands
    g_c = dlogits[:, None] * a[None, :]
    return loss, g_a, g_c[0], g_c[1:]


def batch_bpr(q: np.ndarray, p: np.ndarray, negs: np.ndarray):
    """Batched BPR. Shapes ``(B, d)``, ``(B, d)``, ``(B, m, d)``; returns mean loss and input grads."""
    b, m = negs.shape[0], negs.shape[1]
    margins = np.einsum("bd,bd->b", q, p)[:, None] - np.einsum("bmd,bd->bm", negs, q)
    loss = -float(np.mean(log_expit(margins)))
    w = -(1.0 - expit(margins)) / (m * b)
    g_q = w.sum(axis=1)[:, None] * p - np.einsum("bm,bmd->bd", w, negs)
    g_p = w.sum(axis=1)[:, None] * q
    g_n = -w[:, :, None] * q[:, None, :]
    return loss, g_q, g_p, g_n


def batch_infonce(a: np.ndarray, p: np.ndarray, negs: np.ndarray, tau: float):
    """Batched InfoNCE; positive sits in column 0 of the candidate block."""
    b = a.shape[0]
    cands = np.concatenate([p[:, None, :], negs], axis=1)
    logits = np.einsum("bkd,bd->bk", cands, a) / tau
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(_positive_nll(logits)))
    probs = np.exp(logits - lse[:, None])
    probs[:, 0] -= 1.0
    d = probs / (tau * b)
    g_a = np.einsum("bk,bkd->bd", d, cands)
    g_c = d[:, :, None] * a[:, None, :]
    return loss, g_a, g_c[:, 0], g_c[:, 1:]
