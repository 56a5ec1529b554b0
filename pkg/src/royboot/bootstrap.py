"""Multiplier-bootstrap engines and the test decision.

Each bootstrap replicate multiplies the centered per-observation second-moment
contributions by independent standard normal weights, conditionally on the
data, and records the same restricted-sup functional as the target statistic.
Replicates draw from their own derived random streams, so the resulting
empirical distribution is bit-identical under any execution order or degree
of parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import linalg
from .errors import InvariantError
from .rng import substream
from .sparse_spectral import sup_values_for_stack
from .stats import Dataset, StatisticValue, sample_covariance

__all__ = [
    "BootstrapConfig",
    "EmpiricalDistribution",
    "TestReport",
    "multiplier_bootstrap_one_sample",
    "multiplier_bootstrap_two_sample",
    "two_sample_centered_stack",
    "eigenvalue_bootstrap_spherical",
    "empirical_quantile",
    "run_test",
]

# Keep batched (replicates x observations x dim) temporaries near ~160 MB.
_ELEM_BUDGET = 20_000_000

MultiplierFn = Callable[[np.random.Generator, int], NDArray]


def _gaussian_multipliers(rng: np.random.Generator, size: int) -> NDArray:
    return rng.standard_normal(size)


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication count, master seed, solver choice, and test level."""

    replicates: int = 1000
    seed: int = 0
    solver: str = "auto"
    alpha: float = 0.05

    def __post_init__(self):
        if self.replicates < 1:
            raise InvariantError("replicates must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise InvariantError("alpha must lie strictly between 0 and 1")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted bootstrap (or Monte Carlo) sample with quantile queries."""

    samples: NDArray[np.float64]
    seed_provenance: tuple = ()

    def __post_init__(self):
        arr = np.sort(np.asarray(self.samples, dtype=np.float64))
        if arr.size < 1:
            raise InvariantError("empirical distribution needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise InvariantError("empirical distribution samples must be finite")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return int(self.samples.size)

    def quantile(self, alpha: float) -> float:
        return empirical_quantile(self, alpha)


def empirical_quantile(dist: EmpiricalDistribution, alpha: float) -> float:
    """(1-alpha) quantile as the ceil((1-alpha) N)-th order statistic.

    The conservative right-continuous convention matching the test's >=
    rejection rule.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    n = len(dist)
    rank = min(max(math.ceil((1.0 - alpha) * n), 1), n)
    return float(dist.samples[rank - 1])


@dataclass(frozen=True)
class TestReport:
    """Decision, calibration quantile, and diagnostics for one test run."""

    statistic: StatisticValue
    q_alpha: float
    reject: bool
    p_value_estimate: float
    distribution: EmpiricalDistribution
    support: tuple[int, ...]
    config: dict = field(default_factory=dict)


def run_test(statistic: StatisticValue, dist: EmpiricalDistribution,
             alpha: float, config: dict | None = None) -> TestReport:
    """Reject when the statistic reaches the bootstrap (1-alpha) quantile.

    The p-value estimate uses add-one smoothing, (1 + #{samples >= stat}) /
    (N + 1), so finite replication never reports an exact zero.
    """
    q = empirical_quantile(dist, alpha)
    n = len(dist)
    exceed = int(np.sum(dist.samples >= statistic.value))
    return TestReport(
        statistic=statistic,
        q_alpha=q,
        reject=bool(statistic.value >= q),
        p_value_estimate=(1 + exceed) / (n + 1),
        distribution=dist,
        support=statistic.inner.support,
        config=dict(config or {}),
    )


def _weighted_moments(rows: NDArray, weights: NDArray) -> NDArray:
    """sum_i w_bi x_i x_i' for every replicate b: (B, n) weights -> (B, d, d)."""
    nrep, n = weights.shape
    d = rows.shape[1]
    out = np.empty((nrep, d, d))
    block = max(1, _ELEM_BUDGET // max(1, n * d))
    for lo in range(0, nrep, block):
        hi = min(nrep, lo + block)
        scaled = rows[None, :, :] * weights[lo:hi, :, None]
        out[lo:hi] = np.matmul(scaled.transpose(0, 2, 1), rows)
    return 0.5 * (out + out.transpose(0, 2, 1))


def _draw_weights(n: int, cfg: BootstrapConfig, purpose: str, which: int,
                  multiplier_fn: MultiplierFn) -> NDArray:
    """One weight vector per replicate, each from its own derived stream."""
    out = np.empty((cfg.replicates, n))
    for b in range(cfg.replicates):
        out[b] = multiplier_fn(substream(cfg.seed, purpose, b, which), n)
    return out


def multiplier_bootstrap_one_sample(
        x: Dataset, sigma: NDArray, s: int, cfg: BootstrapConfig,
        normalized: bool = True, plugin_center: bool = False,
        multiplier_fn: MultiplierFn = _gaussian_multipliers,
) -> EmpiricalDistribution:
    """One-sample multiplier bootstrap of the restricted-sup statistic.

    Replicate b forms (1/sqrt(n)) sum_i w_bi (x_i x_i' - C) with C = sigma
    (or the sample covariance when ``plugin_center``) and records the
    normalized restricted sup against the fixed denominator ``sigma`` --
    whose per-support factorizations are shared across all replicates -- or
    the plain restricted spectral norm when ``normalized`` is False.
    """
    den = linalg.check_symmetric(sigma)
    if den.shape[0] != x.d:
        raise ValueError(f"sigma dim {den.shape[0]} != data dim {x.d}")
    centerm = sample_covariance(x) if plugin_center else den
    weights = _draw_weights(x.n, cfg, "one-sample", 0, multiplier_fn)
    moments = _weighted_moments(x.rows, weights)
    total = weights.sum(axis=1)
    a_stack = (moments - total[:, None, None] * centerm) / math.sqrt(x.n)
    values = sup_values_for_stack(
        a_stack, s, denom=den if normalized else None,
        solver=cfg.solver, seed=cfg.seed)
    return EmpiricalDistribution(
        samples=values, seed_provenance=(cfg.seed, ("one-sample",)))


def two_sample_centered_stack(
        x: Dataset, y: Dataset, cfg: BootstrapConfig,
        multiplier_fn: MultiplierFn = _gaussian_multipliers,
        eta_equals_xi: bool = False,
) -> NDArray[np.float64]:
    """The (replicates, d, d) stack of two-sample multiplier numerators.

    Replicate b is sum_i w_bi (x_i x_i' - S1)/n - sum_i u_bi (y_i y_i' - S2)/m
    with independent weight vectors w, u and plug-in centering at the sample
    covariances.  ``eta_equals_xi`` is a diagnostic hook that reuses the
    first weight vector for both samples (requires n == m).
    """
    if x.d != y.d:
        raise ValueError(f"dimension mismatch: x has d={x.d}, y has d={y.d}")
    n, m = x.n, y.n
    s1 = sample_covariance(x)
    s2 = sample_covariance(y)
    xi = _draw_weights(n, cfg, "two-sample", 0, multiplier_fn)
    if eta_equals_xi:
        if n != m:
            raise ValueError("eta_equals_xi requires n == m")
        eta = xi
    else:
        eta = _draw_weights(m, cfg, "two-sample", 1, multiplier_fn)
    part_x = (_weighted_moments(x.rows, xi)
              - xi.sum(axis=1)[:, None, None] * s1) / n
    part_y = (_weighted_moments(y.rows, eta)
              - eta.sum(axis=1)[:, None, None] * s2) / m
    return part_x - part_y


def multiplier_bootstrap_two_sample(
        x: Dataset, y: Dataset, s: int, cfg: BootstrapConfig,
        multiplier_fn: MultiplierFn = _gaussian_multipliers,
        eta_equals_xi: bool = False,
) -> EmpiricalDistribution:
    """Two-sample multiplier bootstrap of the covariance-equality statistic.

    Records sqrt((n+m)/(nm)) times the restricted sup of each centered
    multiplier numerator against the fixed denominator S1/n + S2/m, whose
    per-support factorizations are computed once for the whole run.
    """
    stack = two_sample_centered_stack(x, y, cfg, multiplier_fn, eta_equals_xi)
    n, m = x.n, y.n
    denom = sample_covariance(x) / n + sample_covariance(y) / m
    scale = math.sqrt((n + m) / (n * m))
    values = scale * sup_values_for_stack(
        stack, s, denom=denom, solver=cfg.solver, seed=cfg.seed)
    return EmpiricalDistribution(
        samples=values, seed_provenance=(cfg.seed, ("two-sample",)))


def eigenvalue_bootstrap_spherical(
        x: Dataset, sigma2: float, cfg: BootstrapConfig,
        multiplier_fn: MultiplierFn = _gaussian_multipliers,
) -> tuple[EmpiricalDistribution, EmpiricalDistribution]:
    """Bootstrap laws of the extreme sample-covariance eigenvalue deviations.

    For covariance proportional to the identity, replicate b forms
    (1/n) sum_i w_bi (x_i x_i' - sigma2 I) and records its largest and
    smallest eigenvalues; these calibrate lambda_max(cov_hat) - sigma2 and
    lambda_min(cov_hat) - sigma2 respectively.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    weights = _draw_weights(x.n, cfg, "spherical", 0, multiplier_fn)
    moments = _weighted_moments(x.rows, weights)
    total = weights.sum(axis=1)
    eye = np.eye(x.d)
    stack = (moments - (total * sigma2)[:, None, None] * eye) / x.n
    vals = np.linalg.eigvalsh(stack)
    prov = (cfg.seed, ("spherical",))
    return (EmpiricalDistribution(samples=vals[:, -1], seed_provenance=prov),
            EmpiricalDistribution(samples=vals[:, 0], seed_provenance=prov))
