"""Monte Carlo estimates with batch-means standard errors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_BATCHES = 32


class BudgetError(ValueError):
    pass


@dataclass
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    params: object = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def agrees_with(self, value: float, n_sigma: float = 3.0) -> bool:
        slack = n_sigma * self.stderr
        return abs(self.mean - value) <= slack + 1e-12

    def __repr__(self):
        lbl = f"{self.label}: " if self.label else ""
        return f"Estimate({lbl}{self.mean:.6g} +- {self.stderr:.2g}, n={self.n_samples})"


def batch_means(values, min_batches: int = MIN_BATCHES):
    """(mean, stderr, n_used) with at least ``min_batches`` equal batches.

    The batch count grows like sqrt(n) so batch length also grows, which is
    the standard consistency requirement for correlated chains.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < min_batches:
        raise BudgetError(f"need at least {min_batches} samples, got {n}")
    b = max(min_batches, int(np.sqrt(n)))
    length = n // b
    used = b * length
    batches = x[:used].reshape(b, length).mean(axis=1)
    mean = float(batches.mean())
    var = float(batches.var(ddof=1)) / b
    return mean, float(np.sqrt(max(var, 0.0))), used


def from_batches(values, seed: int, params=None, label: str = "",
                 meta: dict | None = None) -> Estimate:
    mean, stderr, used = batch_means(values)
    return Estimate(mean, stderr, used, seed, params=params, label=label,
                    meta=dict(meta or {}))


def difference(a: Estimate, b: Estimate, label: str = "") -> Estimate:
    """a - b with independent-error propagation (use paired batches via
    ``from_batches`` on the differenced stream when runs share randomness)."""
    return Estimate(
        a.mean - b.mean,
        float(np.hypot(a.stderr, b.stderr)),
        min(a.n_samples, b.n_samples),
        a.seed,
        params=a.params,
        label=label or f"{a.label}-{b.label}",
    )


def estimate_tau_int(values, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time via the initial positive sequence."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = float(x.var())
    if var == 0.0:
        return 1.0
    if max_lag is None:
        max_lag = n // 4
    tau = 1.0
    for lag in range(1, max_lag):
        rho = float(np.dot(x[:-lag], x[lag:]) / ((n - lag) * var))
        if rho <= 0.0:
            break
        tau += 2.0 * rho
    return tau
