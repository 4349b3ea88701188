"""Independent brute-force oracles used by the test suite.

These deliberately avoid the code paths they check: the QP oracle solves the
SVM dual by projected gradient ascent with a bisection projection onto the
box/hyperplane intersection; ranking oracles are naive definitional loops.
"""

import numpy as np


def svm_dual_objective(alpha, y, K):
    """W(alpha) = sum(alpha) - 0.5 * alpha^T (yy^T * K) alpha."""
    Q = np.outer(y, y) * K
    return alpha.sum() - 0.5 * alpha @ Q @ alpha


def _project(alpha0, y, C):
    """Project onto {0 <= a <= C, y^T a = 0}. g(lam) = y . clip(a0 - lam*y)
    is piecewise linear and non-increasing in lam; find its root exactly by
    scanning the clip breakpoints."""
    bps = np.concatenate([
        np.where(y > 0, alpha0 - C, -alpha0),
        np.where(y > 0, alpha0, C - alpha0),
    ])
    bps = np.unique(bps)
    g = np.clip(alpha0[None, :] - bps[:, None] * y[None, :], 0.0, C) @ y
    if g[0] <= 0:
        lam = bps[0]
    elif g[-1] >= 0:
        lam = bps[-1]
    else:
        j = int(np.searchsorted(-g, 0.0))  # first index with g <= 0
        g0, g1 = g[j - 1], g[j]
        lam = bps[j - 1] if g0 == g1 else \
            bps[j - 1] + (bps[j] - bps[j - 1]) * g0 / (g0 - g1)
    return np.clip(alpha0 - lam * y, 0.0, C)


def solve_svm_dual_pg(y, K, C, iters=4000):
    """Maximize the SVM dual by projected gradient ascent; exact enough for
    n <= 8 toy instances (objective accurate to ~1e-9)."""
    n = len(y)
    Q = np.outer(y, y) * K
    L = np.linalg.eigvalsh(Q).max()
    step = 1.0 / max(L, 1e-12)
    alpha = _project(np.full(n, C / 2.0), y, C)
    prev = alpha.copy()
    for t in range(iters):
        # Nesterov momentum speeds convergence to the 1e-9 range.
        beta = t / (t + 3.0)
        z = alpha + beta * (alpha - prev)
        grad = 1.0 - Q @ z
        prev = alpha
        alpha = _project(z + step * grad, y, C)
    return alpha


def ap_oracle(ranking, relevant):
    """Definitional average precision (total-relevant denominator)."""
    relevant = set(relevant)
    if not relevant:
        return 0.0
    total = 0.0
    hits = 0
    for r, doc in enumerate(ranking, 1):
        if doc in relevant:
            hits += 1
            prec = sum(1 for d in ranking[:r] if d in relevant) / r
            total += prec
    return total / len(relevant)


def p_at_k_oracle(ranking, relevant, k):
    return sum(1 for d in list(ranking)[:k] if d in set(relevant)) / k


def ap_truncated_oracle(ranking, relevant, k):
    """AP on the top-k ranking with the retrieved-hits denominator."""
    top = list(ranking)[:k]
    relevant = set(relevant)
    hits = [r for r, d in enumerate(top, 1) if d in relevant]
    if not hits:
        return 0.0
    total = 0.0
    for r in hits:
        total += sum(1 for d in top[:r] if d in relevant) / r
    return total / len(hits)


def knn_linear_scan(points, ids, q, k):
    """Exact k-NN by full scan; ties by id ascending."""
    d2 = ((np.asarray(points, dtype=float) - np.asarray(q, dtype=float)) ** 2).sum(axis=1)
    order = sorted(range(len(ids)), key=lambda i: (d2[i], ids[i]))
    return [ids[i] for i in order[:k]]


def cosine_sort_oracle(q, ids, matrix, k):
    q = np.asarray(q, dtype=float)
    M = np.asarray(matrix, dtype=float)
    sims = M @ q / (np.linalg.norm(M, axis=1) * np.linalg.norm(q))
    order = sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))
    return [ids[i] for i in order[:k]]
