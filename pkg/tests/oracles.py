"""Slow, independent reference computations used as test oracles."""
import itertools
import math

import numpy as np


def householder_tridiagonal(a):
    """Orthogonal similarity reduction to tridiagonal form (diag, offdiag)."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        alpha = -math.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0:
            continue
        v /= vn
        h = np.eye(n)
        h[k + 1:, k + 1:] -= 2.0 * np.outer(v, v)
        a = h @ a @ h
    return np.diag(a).copy(), np.diag(a, 1).copy()


def sturm_count(diag, off, x):
    """Number of eigenvalues of the tridiagonal matrix strictly below x."""
    count = 0
    q = 1.0
    for i in range(len(diag)):
        b2 = off[i - 1] ** 2 if i > 0 else 0.0
        q = (diag[i] - x) - (b2 / q if i > 0 else 0.0)
        if q == 0.0:
            q = -1e-300
        if q < 0:
            count += 1
    return count


def bisection_eigenvalues(a, tol=1e-14):
    """All eigenvalues (descending) by Sturm-sequence bisection."""
    diag, off = householder_tridiagonal(a)
    n = len(diag)
    radius = np.abs(np.asarray(a)).sum(1).max() + 1.0
    out = []
    for k in range(n):
        lo, hi = -radius, radius
        while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if sturm_count(diag, off, mid) > k:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out[::-1])


def naive_sq_dists(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d[i, j] = sum((x[i, k] - x[j, k]) ** 2 for k in range(x.shape[1]))
    return d


def brute_knn(x, i, k, candidates=None):
    """k nearest candidates of sample i; ties to the smaller index."""
    n = len(x)
    cand = range(n) if candidates is None else candidates
    dist = [(float(np.sum((x[i] - x[j]) ** 2)), j) for j in cand if j != i]
    dist.sort()
    return [j for _, j in dist[:k]]


def pair_count_auc(scores, labels):
    """AUC by explicit pair counting; lower score means positive."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p < q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def principal_angles(a, b):
    from scipy.linalg import subspace_angles
    return subspace_angles(np.asarray(a), np.asarray(b))


def reference_affinities(x, perplexity):
    """Row-by-row Gaussian affinities with each bandwidth found by brentq.

    Entropies are in nats; the symmetrized joint matrix is returned.
    """
    from scipy.optimize import brentq

    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    cond = np.zeros((n, n))
    target = np.log(perplexity)
    for i in range(n):
        d = np.array([np.sum((x[i] - x[j]) ** 2) for j in range(n) if j != i])
        d = d - d.min()

        def entropy_gap(log_beta):
            w = np.exp(-np.exp(log_beta) * d)
            p = w / w.sum()
            nz = p[p > 0]
            return -np.sum(nz * np.log(nz)) - target

        log_beta = brentq(entropy_gap, -60.0, 60.0, xtol=1e-14)
        w = np.exp(-np.exp(log_beta) * d)
        row = w / w.sum()
        cond[i, [j for j in range(n) if j != i]] = row
    return (cond + cond.T) / (2 * n)


def brute_knn_classify(train_x, train_y, test_x, k):
    """Exhaustive kNN vote: distance ties to the smaller train index, vote ties to the smaller class."""
    out = []
    for t in test_x:
        dist = sorted((float(np.sum((np.asarray(t) - np.asarray(x)) ** 2)), j)
                      for j, x in enumerate(train_x))
        votes = {}
        for _, j in dist[:k]:
            votes[train_y[j]] = votes.get(train_y[j], 0) + 1
        best = max(votes.values())
        out.append(min(c for c, v in votes.items() if v == best))
    return np.array(out)
