"""Independent oracles used across the test suite.

These are deliberately written against the math, not against the library:
finite differences for gradients, a brute-force ranking scorer for metrics,
and a spherical-law-of-cosines distance for cross-checking haversine. They
must stay free of imports from the code paths they check.
"""

import math

import numpy as np


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function f at x (float64)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def brute_force_metrics(ranks, ks=(1, 5, 10), mrr_k=10):
    """Recall@K and MRR@K by direct enumeration over a list of 1-based ranks."""
    ranks = list(ranks)
    m = len(ranks)
    recalls = {}
    for k in ks:
        hits = 0
        for r in ranks:
            if r <= k:
                hits += 1
        recalls[k] = hits / m
    mrr_total = 0.0
    for r in ranks:
        if r <= mrr_k:
            mrr_total += 1.0 / r
    return recalls, mrr_total / m


def rank_of_target(scores, target) -> int:
    """1-based rank under descending score, ties broken by lowest index."""
    rank = 1
    for j, s in enumerate(scores):
        if s > scores[target]:
            rank += 1
        elif s == scores[target] and j < target:
            rank += 1
    return rank


def law_of_cosines_km(lat1, lon1, lat2, lon2, radius_km=6371.0) -> float:
    """Great-circle distance via the spherical law of cosines."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius_km * math.acos(min(1.0, max(-1.0, c)))


def entropy_nats(counts) -> float:
    """Shannon entropy of a count vector, natural log, by direct summation."""
    total = float(sum(counts))
    e = 0.0
    for c in counts:
        if c > 0:
            q = c / total
            e -= q * math.log(q)
    return e
