"""Data generators, covariance models, and the Monte Carlo test harness.

Covers the three covariance structures (long-range, short-range, isotropic)
with random diagonal rescaling, the three alternative constructions, the
size/power harness for the two-sample test, a simplified entrywise-max
baseline test, and the spherical density study comparing the multiplier
bootstrap against a plain Monte Carlo reference and a row-resampling
bootstrap.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy.stats import gaussian_kde, ks_2samp

from . import linalg
from .bootstrap import (BootstrapConfig, EmpiricalDistribution, TestReport,
                        eigenvalue_bootstrap_spherical,
                        multiplier_bootstrap_two_sample, run_test,
                        two_sample_centered_stack)
from .errors import NotPositiveDefiniteError
from .rng import child_seed, substream
from .sparse_spectral import RestrictedEigResult
from .stats import Dataset, StatisticValue, sample_covariance, two_sample_stat

__all__ = [
    "CovarianceModel",
    "AlternativeSpec",
    "SimResult",
    "DensityTable",
    "base_covariance",
    "realize_covariance",
    "apply_alternative",
    "gaussian_sample",
    "rademacher_sample",
    "run_size_power",
    "linf_baseline_test",
    "density_study_spherical",
    "TABLE_MODELS",
    "ALTERNATIVE_LEVELS",
]

MODEL_KINDS = ("long-range", "short-range", "isotropic", "custom")

# CLI table index -> covariance structure (1, 2, 3 in the usual ordering).
TABLE_MODELS = {1: "long-range", 2: "short-range", 3: "isotropic"}

# (model kind, d) -> (c1, c2, c3) perturbation levels for alternatives 1-3.
ALTERNATIVE_LEVELS = {
    ("long-range", 40): (0.9, 0.35, 0.1),
    ("long-range", 100): (1.1, 0.4, 0.1),
    ("short-range", 40): (0.7, 0.4, 0.1),
    ("short-range", 100): (0.85, 0.4, 0.1),
    ("isotropic", 40): (0.8, 0.3, 0.12),
    ("isotropic", 100): (0.85, 0.3, 0.1),
}


@dataclass(frozen=True)
class CovarianceModel:
    """Base covariance structure plus the random diagonal rescaling."""

    kind: str
    d: int
    custom: NDArray | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown covariance model {self.kind!r}")
        if self.kind == "custom":
            mat = linalg.check_symmetric(self.custom)
            if mat.shape[0] != self.d:
                raise ValueError("custom matrix dimension != d")
            object.__setattr__(self, "custom", mat)
        if self.d < 1:
            raise ValueError("d must be positive")


def base_covariance(model: CovarianceModel) -> NDArray[np.float64]:
    """The unscaled structure matrix (before diagonal rescaling)."""
    d = model.d
    if model.kind == "long-range":
        out = np.full((d, d), 0.5)
        np.fill_diagonal(out, 1.0)
        return out
    if model.kind == "short-range":
        idx = np.arange(d)
        return 0.1 ** np.abs(idx[:, None] - idx[None, :])
    if model.kind == "isotropic":
        return np.eye(d)
    return model.custom.copy()


def realize_covariance(model: CovarianceModel, seed: int) -> NDArray[np.float64]:
    """O * base * O with diag(O) drawn i.i.d. Uniform(0.5, 1.5) from the seed."""
    scale = substream(seed, "scale").uniform(0.5, 1.5, size=model.d)
    return linalg.symmetrize(base_covariance(model) * np.outer(scale, scale))


@dataclass(frozen=True)
class AlternativeSpec:
    """Perturbation applied to the first covariance to form the second.

    kind: null | alt1 (sparse rank-one bump, level c) | alt2 (single
    off-diagonal entry bump) | alt3 (subdiagonal congruence).  ``support``
    optionally pins alt1's size-5 support instead of drawing it.
    """

    kind: str = "null"
    c: float = 0.0
    support: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("null", "alt1", "alt2", "alt3"):
            raise ValueError(f"unknown alternative {self.kind!r}")


def apply_alternative(sigma1: NDArray, alt: AlternativeSpec,
                      seed: int) -> NDArray[np.float64]:
    """Second-population covariance under the given alternative."""
    base = linalg.check_symmetric(sigma1)
    d = base.shape[0]
    if alt.kind == "null":
        return base.copy()
    if alt.kind == "alt1":
        if d < 5:
            raise ValueError("alt1 needs d >= 5 (rank-one direction has support 5)")
        if alt.support is not None:
            sup = np.asarray(alt.support, dtype=np.intp)
            if sup.size != 5:
                raise ValueError("alt1 support must have size 5")
        else:
            sup = np.sort(substream(seed, "alt-support").choice(
                d, size=5, replace=False))
        v = np.zeros(d)
        v[sup] = 1.0 / np.sqrt(5.0)
        return base + alt.c * np.outer(v, v)
    if alt.kind == "alt2":
        if d < 2:
            raise ValueError("alt2 needs d >= 2")
        out = base.copy()
        out[0, 1] += alt.c
        out[1, 0] += alt.c
        return out
    bump = np.eye(d)
    bump[np.arange(1, d), np.arange(d - 1)] += alt.c
    return linalg.symmetrize(bump.T @ base @ bump)


def _psd_factor(sigma: NDArray) -> NDArray[np.float64]:
    """Lower factor L with L L' = sigma; eigenvalue square root if singular."""
    try:
        return linalg.cholesky(sigma)
    except NotPositiveDefiniteError:
        pair = linalg.sym_eigen(sigma)
        return pair.vectors * np.sqrt(np.maximum(pair.values, 0.0))


def gaussian_sample(sigma: NDArray, n: int, seed: int) -> Dataset:
    """n mean-zero Gaussian rows with the given covariance."""
    factor = _psd_factor(linalg.check_symmetric(sigma))
    z = substream(seed, "gauss").standard_normal((n, sigma.shape[0]))
    return Dataset(rows=z @ factor.T)


def rademacher_sample(sigma: NDArray, n: int, seed: int) -> Dataset:
    """Sub-Gaussian non-normal generator: +-1 coordinates through the factor."""
    factor = _psd_factor(linalg.check_symmetric(sigma))
    u = substream(seed, "rademacher").integers(
        0, 2, size=(n, sigma.shape[0])).astype(np.float64) * 2.0 - 1.0
    return Dataset(rows=u @ factor.T)


@dataclass(frozen=True)
class SimResult:
    """Per-replicate decisions and summary of one Monte Carlo cell.

    ``decisions`` holds 1.0 / 0.0 with NaN at replicates that errored;
    ``errors`` lists the corresponding messages (None where successful).
    """

    config: dict
    decisions: NDArray[np.float64]
    statistics: NDArray[np.float64]
    q_alphas: NDArray[np.float64]
    p_values: NDArray[np.float64]
    errors: list
    wall_time_s: float
    baseline_decisions: NDArray[np.float64] | None = None
    baseline_statistics: NDArray[np.float64] | None = None

    @property
    def rejection_rate(self) -> float:
        return float(np.nanmean(self.decisions))

    @property
    def baseline_rejection_rate(self) -> float | None:
        if self.baseline_decisions is None:
            return None
        return float(np.nanmean(self.baseline_decisions))

    @property
    def n_errors(self) -> int:
        return sum(e is not None for e in self.errors)


def linf_baseline_test(x: Dataset, y: Dataset, cfg: BootstrapConfig) -> TestReport:
    """Entrywise-max two-sample test, calibrated by the same multiplier scheme.

    Statistic sqrt(nm/(n+m)) * max_jk |S1 - S2|_jk; each bootstrap replicate
    applies the identical functional to the centered multiplier numerator.
    The report's ``support`` marks the attaining entry (its vector is that
    entry's indicator direction, diagnostics only).
    """
    if x.d != y.d:
        raise ValueError(f"dimension mismatch: x has d={x.d}, y has d={y.d}")
    n, m = x.n, y.n
    diff = sample_covariance(x) - sample_covariance(y)
    scale = np.sqrt(n * m / (n + m))
    flat = int(np.argmax(np.abs(diff)))
    j, k = divmod(flat, x.d)
    entry = abs(float(diff[j, k]))
    vec = np.zeros(x.d)
    if j == k:
        vec[j] = 1.0
    else:
        vec[j] = vec[k] = 1.0 / np.sqrt(2.0)
    inner = RestrictedEigResult(
        value=entry, support=tuple(sorted({j, k})), vector=vec,
        solver="entrywise", certified_exact=True)
    statistic = StatisticValue(value=float(scale * entry), scale_factor=float(scale),
                               inner=inner, kind="linf_baseline",
                               meta={"n": n, "m": m})
    stack = two_sample_centered_stack(x, y, cfg)
    samples = scale * np.max(np.abs(stack), axis=(1, 2))
    dist = EmpiricalDistribution(samples=samples,
                                 seed_provenance=(cfg.seed, ("linf-baseline",)))
    return run_test(statistic, dist, cfg.alpha)


def _one_replicate(model: CovarianceModel, alt: AlternativeSpec, n: int, m: int,
                   s: int, cfg: BootstrapConfig, rep: int, fix_scale_seed: bool,
                   include_baseline: bool) -> dict:
    master = cfg.seed
    scale_seed = child_seed(master, "scale") if fix_scale_seed \
        else child_seed(master, "mc", rep, "scale")
    alt_seed = child_seed(master, "alt") if fix_scale_seed \
        else child_seed(master, "mc", rep, "alt")
    sigma1 = realize_covariance(model, scale_seed)
    sigma2 = apply_alternative(sigma1, alt, alt_seed)
    x = gaussian_sample(sigma1, n, child_seed(master, "mc", rep, "x"))
    y = gaussian_sample(sigma2, m, child_seed(master, "mc", rep, "y"))
    rep_cfg = replace(cfg, seed=child_seed(master, "mc", rep, "boot"))
    stat = two_sample_stat(x, y, s, cfg.solver)
    dist = multiplier_bootstrap_two_sample(x, y, s, rep_cfg)
    report = run_test(stat, dist, cfg.alpha)
    out = {
        "decision": float(report.reject),
        "statistic": report.statistic.value,
        "q_alpha": report.q_alpha,
        "p_value": report.p_value_estimate,
    }
    if include_baseline:
        base_cfg = replace(cfg, seed=child_seed(master, "mc", rep, "baseline"))
        base = linf_baseline_test(x, y, base_cfg)
        out["baseline_decision"] = float(base.reject)
        out["baseline_statistic"] = base.statistic.value
    return out


def run_size_power(model: CovarianceModel, alt: AlternativeSpec, n: int, m: int,
                   s: int, cfg: BootstrapConfig, mc_reps: int, *,
                   fix_scale_seed: bool = False, include_baseline: bool = False,
                   threads: int = 1, progress=None) -> SimResult:
    """Monte Carlo rejection rate of the two-sample test for one configuration.

    Each replicate draws a fresh diagonal rescaling and fresh data (pass
    ``fix_scale_seed`` to pin the rescaling and the alternative's support
    across replicates), runs the statistic, its multiplier bootstrap, and the
    decision, optionally alongside the entrywise-max baseline on the same
    data.  Replicates that raise are recorded in ``errors``, never dropped
    silently.  Results are independent of ``threads``.
    """
    t0 = time.perf_counter()
    decisions = np.full(mc_reps, np.nan)
    statistics = np.full(mc_reps, np.nan)
    q_alphas = np.full(mc_reps, np.nan)
    p_values = np.full(mc_reps, np.nan)
    base_dec = np.full(mc_reps, np.nan) if include_baseline else None
    base_stat = np.full(mc_reps, np.nan) if include_baseline else None
    errors: list = [None] * mc_reps

    def work(rep: int) -> dict | Exception:
        try:
            return _one_replicate(model, alt, n, m, s, cfg, rep,
                                  fix_scale_seed, include_baseline)
        except Exception as exc:   # noqa: BLE001 - reported per replicate
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(mc_reps)))
    else:
        results = []
        for rep in range(mc_reps):
            results.append(work(rep))
            if progress is not None:
                progress(rep + 1, mc_reps)
    for rep, res in enumerate(results):
        if isinstance(res, Exception):
            errors[rep] = f"{type(res).__name__}: {res}"
            continue
        decisions[rep] = res["decision"]
        statistics[rep] = res["statistic"]
        q_alphas[rep] = res["q_alpha"]
        p_values[rep] = res["p_value"]
        if include_baseline:
            base_dec[rep] = res["baseline_decision"]
            base_stat[rep] = res["baseline_statistic"]
    config = {
        "model": model.kind, "d": model.d, "alt": alt.kind, "c": alt.c,
        "n": n, "m": m, "s": s, "alpha": cfg.alpha, "replicates": cfg.replicates,
        "solver": cfg.solver, "seed": cfg.seed, "mc_reps": mc_reps,
        "fix_scale_seed": fix_scale_seed, "include_baseline": include_baseline,
    }
    return SimResult(config=config, decisions=decisions, statistics=statistics,
                     q_alphas=q_alphas, p_values=p_values, errors=errors,
                     wall_time_s=time.perf_counter() - t0,
                     baseline_decisions=base_dec, baseline_statistics=base_stat)


@dataclass(frozen=True)
class DensityTable:
    """Samples and kernel-density grids for one (n, d) spherical study cell.

    ``samples`` keys: "exact" (Monte Carlo law of the largest sample
    eigenvalue), "mboots" (multiplier bootstrap, shifted by sigma2),
    "nboots" (row-resampling bootstrap).  Densities share a common grid.
    """

    n: int
    d: int
    sigma2: float
    samples: dict
    grid: NDArray[np.float64]
    densities: dict
    ks_mboots: float
    ks_nboots: float
    config: dict = field(default_factory=dict)


def _nonparametric_eig_boot(x: Dataset, cfg: BootstrapConfig) -> NDArray:
    """Largest eigenvalue of the covariance of row-resampled datasets."""
    n = x.n
    out = np.empty(cfg.replicates)
    block = max(1, 4_000_000 // max(1, n * x.d))
    idx = np.empty((cfg.replicates, n), dtype=np.intp)
    for b in range(cfg.replicates):
        idx[b] = substream(cfg.seed, "nboot", b).integers(0, n, size=n)
    for lo in range(0, cfg.replicates, block):
        hi = min(cfg.replicates, lo + block)
        rows = x.rows[idx[lo:hi]]                       # (B, n, d)
        covs = np.matmul(rows.transpose(0, 2, 1), rows) / n
        out[lo:hi] = np.linalg.eigvalsh(covs)[:, -1]
    return out


def density_study_spherical(n_list, d_list, mc_reps: int, cfg: BootstrapConfig,
                            sigma2: float = 1.0, progress=None) -> list[DensityTable]:
    """Compare three approximations of the largest-eigenvalue law per (n, d).

    "exact": largest sample-covariance eigenvalue over ``mc_reps`` fresh
    Gaussian datasets.  "mboots": the spherical multiplier bootstrap on one
    fixed dataset, shifted by sigma2.  "nboots": the row-resampling bootstrap
    on the same fixed dataset.  Gaussian-kernel densities (Silverman
    bandwidth, 512 grid points) are evaluated on a common grid.
    """
    tables = []
    for n in n_list:
        for d in d_list:
            cov = sigma2 * np.eye(d)
            exact = np.empty(mc_reps)
            for r in range(mc_reps):
                ds = gaussian_sample(cov, n, child_seed(cfg.seed, "exact", n, d, r))
                covs = sample_covariance(ds)
                exact[r] = float(np.linalg.eigvalsh(covs)[-1])
                if progress is not None and (r + 1) % 500 == 0:
                    progress(f"exact n={n} d={d}: {r + 1}/{mc_reps}")
            fixed = gaussian_sample(cov, n, child_seed(cfg.seed, "fixed", n, d))
            boot_cfg = replace(cfg, seed=child_seed(cfg.seed, "mboot", n, d))
            max_dist, _ = eigenvalue_bootstrap_spherical(fixed, sigma2, boot_cfg)
            mboots = max_dist.samples + sigma2
            npar_cfg = replace(cfg, seed=child_seed(cfg.seed, "nboot", n, d))
            nboots = _nonparametric_eig_boot(fixed, npar_cfg)
            samples = {"exact": exact, "mboots": mboots, "nboots": nboots}
            lo = min(float(v.min()) for v in samples.values())
            hi = max(float(v.max()) for v in samples.values())
            pad = 0.05 * (hi - lo) if hi > lo else 1.0
            grid = np.linspace(lo - pad, hi + pad, 512)
            densities = {key: gaussian_kde(val, bw_method="silverman")(grid)
                         for key, val in samples.items()}
            tables.append(DensityTable(
                n=n, d=d, sigma2=sigma2, samples=samples, grid=grid,
                densities=densities,
                ks_mboots=float(ks_2samp(exact, mboots).statistic),
                ks_nboots=float(ks_2samp(exact, nboots).statistic),
                config={"n": n, "d": d, "sigma2": sigma2, "mc_reps": mc_reps,
                        "replicates": cfg.replicates, "seed": cfg.seed}))
    return tables
