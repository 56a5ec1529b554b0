"""Epsilon-nets of the s-sparse unit sphere and discretization checks.

The sparse sphere decomposes into one unit sphere per size-s support, so a
net is built support by support from a deterministic spherical-coordinate
lattice: polar angles on a grid fine enough that the rotation error is at
most eps/2, with the residual eps/2 delegated to a sub-net of the equatorial
sphere (scaled by the band radius).  Cardinalities stay within the standard
covering budget (1 + 2/eps)^s per support.

These constructions back three machine checks used by tests and the CLI
``verify`` command: the rescaled-form Lipschitz bound, the sup-vs-net-max
sandwich, and the net-cardinality budget.  They also provide the dense-net
evaluation oracle that cross-checks the whitened-eigenproblem solvers
through an independent computational path (direct ratio evaluation, no
factorizations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from . import linalg
from .errors import CapExceededError
from .rng import substream
from .sparse_spectral import (enumerate_supports, restricted_condition_number,
                              restricted_normalized_sup)
from .stats import Dataset, one_sample_normalized_stat, sample_covariance

__all__ = [
    "EpsNet",
    "build_net",
    "sphere_net",
    "sphere_net_blocks",
    "net_cardinality_budget",
    "net_normalized_max",
    "LipschitzCheck",
    "check_lipschitz_bound",
    "SandwichCheck",
    "check_discretization_sandwich",
]

NET_CAP = 10 ** 7


def _circle_count(eps: float) -> int:
    # m equally spaced points cover the circle within chord 2 sin(pi/(2m)).
    return max(2, math.ceil(math.pi / (2.0 * math.asin(min(eps, 2.0) / 2.0))))


def sphere_net(k: int, eps: float) -> NDArray[np.float64]:
    """Deterministic eps-net (Euclidean chord metric) of the unit sphere in R^k."""
    return np.concatenate(list(sphere_net_blocks(k, eps)), axis=0)


def sphere_net_blocks(k: int, eps: float,
                      block_rows: int = 200_000) -> Iterator[NDArray[np.float64]]:
    """Yield the net of the unit sphere in R^k in row blocks (streaming form)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < eps:
        raise ValueError("eps must be positive")
    if k == 1:
        yield np.array([[1.0], [-1.0]])
        return
    if eps >= 2.0:
        point = np.zeros((1, k))
        point[0, 0] = 1.0
        yield point
        return
    if k == 2:
        m = _circle_count(eps)
        ang = 2.0 * math.pi * np.arange(m) / m
        yield np.column_stack([np.cos(ang), np.sin(ang)])
        return
    nbands = math.ceil(math.pi / eps)
    buf: list[NDArray] = []
    size = 0
    for j in range(nbands + 1):
        theta = math.pi * j / nbands
        c, r = math.cos(theta), math.sin(theta)
        if r * 2.0 <= eps / 2.0:
            sub = np.zeros((1, k - 1))
            sub[0, 0] = 1.0 if r > 0 else 0.0   # pole: equatorial part vanishes
        else:
            sub = sphere_net(k - 1, (eps / 2.0) / r)
        block = np.empty((sub.shape[0], k))
        block[:, 0] = c
        block[:, 1:] = r * sub
        buf.append(block)
        size += block.shape[0]
        if size >= block_rows:
            yield np.concatenate(buf, axis=0)
            buf, size = [], 0
    if buf:
        yield np.concatenate(buf, axis=0)


def net_cardinality_budget(d: int, s: int, eps: float) -> float:
    """log of the covering budget C(d, s) * (1 + 2/eps)^s."""
    return math.log(math.comb(d, s)) + s * math.log1p(2.0 / eps)


@dataclass(frozen=True)
class EpsNet:
    """Materialized eps-net of the s-sparse unit sphere in R^d.

    ``points`` holds unit s-sparse d-vectors grouped by support: rows
    ``offsets[i]:offsets[i+1]`` share ``supports[i]``.
    """

    d: int
    s: int
    epsilon: float
    points: NDArray[np.float64]
    supports: NDArray[np.intp]
    offsets: NDArray[np.intp]

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def log_cardinality(self) -> float:
        return math.log(len(self))

    def coverage_gap(self, probes: int, seed: int = 0) -> float:
        """Largest nearest-net distance over random sparse unit probes."""
        rng = substream(seed, "net-coverage")
        worst = 0.0
        nsup = self.supports.shape[0]
        for _ in range(probes):
            i = int(rng.integers(nsup))
            sup = self.supports[i]
            w = rng.standard_normal(self.s)
            w /= np.linalg.norm(w)
            block = self.points[self.offsets[i]:self.offsets[i + 1]][:, sup]
            gap = float(np.sqrt(np.min(np.sum((block - w) ** 2, axis=1))))
            worst = max(worst, gap)
        return worst


def build_net(d: int, s: int, epsilon: float, cap: int = NET_CAP) -> EpsNet:
    """Union over all size-s supports of per-support sphere nets.

    The precondition C(d, s) * (1 + 2/epsilon)^s <= cap bounds the budget
    before any allocation; violation raises :class:`CapExceededError` naming
    the offending count.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    budget = math.comb(d, s) * (1.0 + 2.0 / epsilon) ** s
    if budget > cap:
        raise CapExceededError(
            f"net budget C({d},{s})*(1+2/eps)^{s} = {budget:.3e} exceeds cap {cap}",
            count=int(min(budget, 2 ** 62)))
    supports = enumerate_supports(d, s, cap=cap)
    template = sphere_net(s, epsilon)
    t = template.shape[0]
    nsup = supports.shape[0]
    points = np.zeros((nsup * t, d))
    for i in range(nsup):
        points[i * t:(i + 1) * t, supports[i]] = template
    offsets = np.arange(nsup + 1, dtype=np.intp) * t
    return EpsNet(d=d, s=s, epsilon=epsilon, points=points,
                  supports=supports, offsets=offsets)


def net_normalized_max(a: NDArray, sigma: NDArray, s: int, eps: float,
                       max_points: int = 5 * 10 ** 8,
                       block_rows: int = 200_000) -> float:
    """max over the eps-net of the s-sparse sphere of |v' a v| / (v' sigma v).

    Streams the per-support sphere template once, evaluating the ratio for
    every support per block by direct quadratic forms.  This path shares no
    code with the eigenproblem solvers, which makes it an independent oracle
    for them (always a lower bound on the true sup, within 2 * gamma_s * eps
    relatively by the discretization sandwich).
    """
    num = linalg.check_symmetric(a)
    den = linalg.check_symmetric(sigma)
    d = num.shape[0]
    supports = enumerate_supports(d, s)
    asub = num[supports[:, :, None], supports[:, None, :]]
    dsub = den[supports[:, :, None], supports[:, None, :]]
    best = 0.0
    total = 0
    for block in sphere_net_blocks(s, eps, block_rows=block_rows):
        total += block.shape[0] * supports.shape[0]
        if total > max_points:
            raise CapExceededError(
                f"net evaluation would exceed {max_points} points", count=total)
        pa = np.einsum("ri,kij->krj", block, asub)
        ps = np.einsum("ri,kij->krj", block, dsub)
        ratios = np.abs(np.einsum("krj,rj->kr", pa, block))
        ratios /= np.einsum("krj,rj->kr", ps, block)
        best = max(best, float(ratios.max()))
    return best


@dataclass(frozen=True)
class LipschitzCheck:
    """Outcome of sampling the rescaled-form Lipschitz bound."""

    trials: int
    max_violation: float
    violation_count: int
    slack: float
    gamma: float
    sup_value: float

    @property
    def passed(self) -> bool:
        return self.violation_count == 0


def check_lipschitz_bound(m: NDArray, sigma: NDArray, s: int, trials: int,
                          seed: int = 0, slack: float = 1e-9) -> LipschitzCheck:
    """Sample same-support pairs (v, w) of sparse unit vectors and verify

        | |v' m v|/(v' sigma v) - |w' m w|/(w' sigma w) |
            <= 2 * gamma_s * ||v - w||_2 * sup-ratio.

    The supremum on the right is computed once by exhaustive enumeration.
    """
    num = linalg.check_symmetric(m)
    den = linalg.check_symmetric(sigma)
    d = num.shape[0]
    gamma = restricted_condition_number(den, s, "brute")
    sup_value = restricted_normalized_sup(num, den, s, "brute").value
    rng = substream(seed, "lipschitz")
    supports = enumerate_supports(d, s)
    pick = rng.integers(0, supports.shape[0], size=trials)
    sup_idx = supports[pick]
    v = rng.standard_normal((trials, s))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    w = rng.standard_normal((trials, s))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    msub = num[sup_idx[:, :, None], sup_idx[:, None, :]]
    ssub = den[sup_idx[:, :, None], sup_idx[:, None, :]]

    def ratio(u):
        qm = np.einsum("ti,tij,tj->t", u, msub, u)
        qs = np.einsum("ti,tij,tj->t", u, ssub, u)
        return np.abs(qm) / qs

    lhs = np.abs(ratio(v) - ratio(w))
    rhs = 2.0 * gamma * np.linalg.norm(v - w, axis=1) * sup_value
    excess = lhs - rhs
    return LipschitzCheck(
        trials=trials,
        max_violation=float(np.max(excess)),
        violation_count=int(np.sum(excess > slack)),
        slack=slack, gamma=gamma, sup_value=sup_value)


@dataclass(frozen=True)
class SandwichCheck:
    """Outcome of the discretization sandwich net_max <= sup <= net_max/(1-2*gamma*eps)."""

    exact: float
    net_max: float
    gamma: float
    epsilon: float
    upper_bound: float
    slack: float

    @property
    def passed(self) -> bool:
        return (self.net_max <= self.exact + self.slack
                and self.exact <= self.upper_bound + self.slack)


def check_discretization_sandwich(x: Dataset, sigma: NDArray, s: int,
                                  epsilon: float, cap: int = NET_CAP,
                                  slack: float = 1e-9) -> SandwichCheck:
    """Verify the net-max sandwich for the normalized one-sample statistic.

    The exact supremum comes from the whitened-eigenproblem solver (brute
    force); the net maximum from direct ratio evaluation over the eps-net.
    Requires epsilon < 1/(2 gamma_s) so the upper bound is informative.
    """
    den = linalg.check_symmetric(sigma)
    gamma = restricted_condition_number(den, s, "brute")
    if epsilon >= 1.0 / (2.0 * gamma):
        raise ValueError(
            f"epsilon {epsilon} must be below 1/(2 gamma_s) = {1/(2*gamma):.4g}")
    budget = math.comb(x.d, s) * (1.0 + 2.0 / epsilon) ** s
    if budget > cap:
        raise CapExceededError(
            f"net budget {budget:.3e} exceeds cap {cap}", count=int(budget))
    exact = one_sample_normalized_stat(x, den, s, solver="brute").value
    diff = sample_covariance(x) - den
    net_max = math.sqrt(x.n) * net_normalized_max(diff, den, s, epsilon)
    upper = net_max / (1.0 - 2.0 * gamma * epsilon)
    return SandwichCheck(exact=exact, net_max=net_max, gamma=gamma,
                         epsilon=epsilon, upper_bound=upper, slack=slack)
