"""Percentile bootstrap over subjects."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MetricFn = Callable[[np.ndarray, np.ndarray], "float | None"]


@dataclass(frozen=True)
class BootstrapCI:
    lo: float | None
    hi: float | None
    used: int
    skipped: int

    def as_list(self) -> list[float | None]:
        return [self.lo, self.hi]


def bootstrap_ci(
    metric: MetricFn,
    labels: Sequence[int],
    scores: Sequence[float],
    n: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    max_retries: int = 10,
) -> BootstrapCI:
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.size == 0:
        raise ValueError("bootstrap needs at least one prediction")
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")

    rng = np.random.default_rng(seed)
    values: list[float] = []
    skipped = 0
    for _ in range(n):
        for _attempt in range(max_retries + 1):
            idx = rng.integers(0, y.size, size=y.size)
            value = metric(y[idx], s[idx])
            if value is not None:
                values.append(float(value))
                break
        else:
            skipped += 1
    if skipped:
        logger.warning("[Bootstrap] %d of %d resamples skipped: metric undefined", skipped, n)
    if not values:
        return BootstrapCI(None, None, 0, skipped)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(np.asarray(values), [tail, 100.0 - tail])
    return BootstrapCI(float(lo), float(hi), len(values), skipped)
