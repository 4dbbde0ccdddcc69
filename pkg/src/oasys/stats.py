"""Rank test and confidence intervals for comparing controllers."""
from __future__ import annotations

import itertools
import math
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .survey import student_t_quantile

EXACT_MAX_N = 8


def _u_statistic(ranks: np.ndarray, n_a: int) -> float:
    return float(ranks[:n_a].sum()) - n_a * (n_a + 1) / 2.0


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float],
                   method: str = "auto") -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Ties get midranks. With both samples of size ``EXACT_MAX_N`` or less the
    p-value comes from enumerating every assignment of the pooled ranks;
    otherwise a normal approximation with tie-corrected variance and a
    continuity correction is used. When every value is identical there is no
    evidence either way and ``(n_a * n_b / 2, 1.0)`` is returned.

    Args:
        sample_a: first sample; U is reported for this one.
        sample_b: second sample.
        method: ``"auto"``, ``"exact"`` or ``"normal"``.

    Returns:
        ``(U, p)``.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        return n_a * n_b / 2.0, 1.0
    ranks = rankdata(pooled)
    u = _u_statistic(ranks, n_a)
    mean = n_a * n_b / 2.0
    if method == "exact" or (method == "auto" and max(n_a, n_b) <= EXACT_MAX_N):
        dev = abs(u - mean) - 1e-9
        hits = total = 0
        offset = n_a * (n_a + 1) / 2.0
        for idx in itertools.combinations(range(n_a + n_b), n_a):
            total += 1
            if abs(sum(ranks[list(idx)]) - offset - mean) >= dev:
                hits += 1
        return u, hits / total
    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float((tie_counts ** 3 - tie_counts).sum()) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    z = max(abs(u - mean) - 0.5, 0.0) / math.sqrt(var)
    return u, min(1.0, 2.0 * (1.0 - NormalDist().cdf(z)))


def t_interval(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float, float]:
    """``(mean, low, high)`` of the t-based interval; one value gives zero width."""
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        raise ValueError("need at least one value")
    mean = float(x.mean())
    if len(x) == 1:
        return mean, mean, mean
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        return mean, mean, mean
    half = student_t_quantile(len(x) - 1, (1.0 - confidence) / 2.0) * sd / math.sqrt(len(x))
    return mean, mean - half, mean + half
