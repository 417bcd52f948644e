"""Bootstrap intervals and rank tests for comparing reward samples."""

from __future__ import annotations

import numpy as np
from scipy import stats


def bootstrap_ci(
    samples, resamples: int = 10000, level: float = 0.95, rng: np.random.Generator | None = None
) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("bootstrap_ci needs at least one sample")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    rng = np.random.default_rng(0) if rng is None else rng
    res = stats.bootstrap(
        (x,), np.mean, n_resamples=resamples, confidence_level=level, method="percentile", random_state=rng
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def mann_whitney_u(a, b) -> float:
    """Two-sided p-value, normal approximation with tie and continuity correction."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if np.all(np.concatenate([a, b]) == a[0]):
        # zero rank variance: the samples are indistinguishable
        return 1.0
    return float(stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True).pvalue)
