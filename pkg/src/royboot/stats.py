"""Covariance statistics assembled from observation matrices.

The model throughout is mean-zero data with second-moment matrix estimated by
the uncentered form (1/n) sum_i x_i x_i' (divisor n, no mean subtraction).
Real data that is not mean-zero should be centered explicitly (``center``
flag / :func:`center_dataset`); the flag is recorded on the dataset.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import linalg
from .sparse_spectral import (RestrictedEigResult, SolverChoice,
                              restricted_normalized_sup)

__all__ = [
    "Dataset",
    "StatisticValue",
    "center_dataset",
    "sample_covariance",
    "one_sample_normalized_stat",
    "one_sample_plain_stat",
    "two_sample_stat",
    "extreme_eigs",
]


@dataclass(frozen=True)
class Dataset:
    """n observations of a d-dimensional vector, one per row.

    ``centered`` records whether column means have been subtracted; when
    False the rows are treated as already mean-zero.
    """

    rows: NDArray[np.float64]
    centered: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError(f"rows must be 2-dimensional, got shape {rows.shape}")
        if rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValueError(f"dataset must be nonempty, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


def center_dataset(x: Dataset) -> Dataset:
    """Subtract column means; the result is flagged as centered."""
    return Dataset(rows=x.rows - x.rows.mean(axis=0, keepdims=True), centered=True)


def sample_covariance(x: Dataset, center: bool = False) -> NDArray[np.float64]:
    """(1/n) sum_i x_i x_i', optionally after subtracting column means."""
    rows = x.rows
    if center and not x.centered:
        rows = rows - rows.mean(axis=0, keepdims=True)
    return linalg.symmetrize(rows.T @ rows / x.n)


@dataclass(frozen=True)
class StatisticValue:
    """A scaled restricted-sup statistic plus the inner solver result."""

    value: float
    scale_factor: float
    inner: RestrictedEigResult
    kind: str   # normalized_one_sample | plain_one_sample | two_sample
    meta: dict = field(default_factory=dict)

    @property
    def support(self) -> tuple[int, ...]:
        return self.inner.support


def _warn_sparsity(s: int, n: int, m: int | None = None) -> None:
    bound = min(n, m) / 10 if m is not None else n / 10
    if s >= bound:
        warnings.warn(
            f"sparsity s={s} is not below min(n,m)/10 = {bound:g}; "
            "calibration may be unreliable", stacklevel=3)


def one_sample_normalized_stat(x: Dataset, sigma: NDArray, s: int,
                               solver: SolverChoice = "auto") -> StatisticValue:
    """sqrt(n) * sup |v'(cov_hat - sigma)v| / (v' sigma v) over s-sparse unit v."""
    den = linalg.check_symmetric(sigma)
    if den.shape[0] != x.d:
        raise ValueError(f"sigma dim {den.shape[0]} != data dim {x.d}")
    _warn_sparsity(s, x.n)
    diff = sample_covariance(x) - den
    inner = restricted_normalized_sup(diff, den, s, solver)
    scale = math.sqrt(x.n)
    return StatisticValue(value=scale * inner.value, scale_factor=scale,
                          inner=inner, kind="normalized_one_sample")


def one_sample_plain_stat(x: Dataset, sigma: NDArray, s: int,
                          solver: SolverChoice = "auto") -> StatisticValue:
    """sqrt(n) * sup |v'(cov_hat - sigma)v| over the s-sparse unit sphere.

    Identical to the normalized statistic with an identity denominator.
    """
    cen = linalg.check_symmetric(sigma)
    if cen.shape[0] != x.d:
        raise ValueError(f"sigma dim {cen.shape[0]} != data dim {x.d}")
    _warn_sparsity(s, x.n)
    diff = sample_covariance(x) - cen
    inner = restricted_normalized_sup(diff, np.eye(x.d), s, solver)
    scale = math.sqrt(x.n)
    return StatisticValue(value=scale * inner.value, scale_factor=scale,
                          inner=inner, kind="plain_one_sample")


def two_sample_stat(x: Dataset, y: Dataset, s: int,
                    solver: SolverChoice = "auto") -> StatisticValue:
    """Two-sample restricted largest-root statistic.

    sqrt((n+m)/(nm)) * sup |v'(S1 - S2)v| / (v'(S1/n + S2/m)v) with S1, S2 the
    two sample covariances.  The 1/n, 1/m scaling sits inside the denominator
    exactly as in the definition.
    """
    if x.d != y.d:
        raise ValueError(f"dimension mismatch: x has d={x.d}, y has d={y.d}")
    _warn_sparsity(s, x.n, y.n)
    s1 = sample_covariance(x)
    s2 = sample_covariance(y)
    denom = s1 / x.n + s2 / y.n
    inner = restricted_normalized_sup(s1 - s2, denom, s, solver)
    scale = math.sqrt((x.n + y.n) / (x.n * y.n))
    return StatisticValue(value=scale * inner.value, scale_factor=scale,
                          inner=inner, kind="two_sample",
                          meta={"n": x.n, "m": y.n})


def extreme_eigs(x: Dataset) -> tuple[float, float]:
    """(largest, smallest) eigenvalue of the sample covariance."""
    pair = linalg.sym_eigen(sample_covariance(x))
    return float(pair.values[0]), float(pair.values[-1])
