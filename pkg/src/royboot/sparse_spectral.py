"""Solvers for s-sparse restricted eigenvalue problems.

The central objects are the restricted extremes of a quadratic form over the
set of unit vectors with at most ``s`` nonzero coordinates, and the restricted
supremum of the normalized form |v' A v| / (v' S v).  Because the normalized
form is scale-invariant in v, the supremum over the sparse unit sphere equals
the maximum over all size-s supports of the spectral norm of the whitened
principal submatrix L^{-1} A_I L^{-T} (with S_I = L L^T), which reduces every
restricted problem to a family of small dense eigenproblems.

Three solvers are provided:

* ``brute``  -- exact enumeration of all C(d, s) supports (batched LAPACK);
* ``greedy`` -- forward selection plus single-coordinate swap refinement,
  a feasible lower bound (never exceeds the brute-force value);
* ``tpm``    -- truncated power iteration, also a feasible lower bound.

``auto`` picks ``brute`` when the support count is small enough for the
bootstrap loops to stay cheap and ``greedy`` otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray

from . import linalg
from .errors import CapExceededError, NotPositiveDefiniteError
from .linalg import PIVOT_RTOL
from .rng import substream

__all__ = [
    "ENUMERATION_CAP",
    "AUTO_BRUTE_CAP",
    "SolverChoice",
    "RestrictedEigResult",
    "enumerate_supports",
    "resolve_solver",
    "restricted_max_eig",
    "restricted_min_eig",
    "restricted_condition_number",
    "restricted_normalized_sup",
    "greedy_support_search",
    "truncated_power_max",
    "sup_values_for_stack",
]

# Hard cap on exhaustive support enumeration (keeps one evaluation ~1 s).
ENUMERATION_CAP = 2_000_000
# `auto` uses brute force only below this support count so that bootstrap
# loops (hundreds of sups per test) stay fast; callers may force `brute`.
AUTO_BRUTE_CAP = 2_000
# Transient element budget for batched submatrix stacks (~160 MB of f64).
_ELEM_BUDGET = 20_000_000

SolverChoice = Literal["brute", "greedy", "tpm", "auto"]

_Mode = Literal["whiten_abs", "plain_abs", "plain_max"]


@dataclass(frozen=True)
class RestrictedEigResult:
    """Value and attaining direction of a restricted eigenvalue problem.

    ``vector`` is a unit d-vector supported on ``support`` (0-based, sorted).
    ``certified_exact`` is True only for exhaustive enumeration.
    """

    value: float
    support: tuple[int, ...]
    vector: NDArray[np.float64]
    solver: str
    certified_exact: bool

    def quadratic_form(self, a: NDArray, denom: NDArray | None = None) -> float:
        """Evaluate |v' a v| (divided by v' denom v when given) at the vector."""
        num = float(self.vector @ np.asarray(a, dtype=np.float64) @ self.vector)
        if denom is None:
            return num
        den = float(self.vector @ np.asarray(denom, dtype=np.float64) @ self.vector)
        return num / den


def enumerate_supports(d: int, s: int, cap: int = ENUMERATION_CAP) -> NDArray[np.intp]:
    """All size-s supports of {0..d-1} in lexicographic order, shape (K, s).

    Raises :class:`CapExceededError` when C(d, s) exceeds ``cap``; the caller
    should downgrade to an approximate solver.
    """
    count = math.comb(d, s)
    if count > cap:
        raise CapExceededError(
            f"C({d},{s}) = {count} supports exceeds enumeration cap {cap}; "
            "use solver='greedy' or 'tpm'", count=count)
    out = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(d), s)),
        dtype=np.intp, count=count * s)
    return out.reshape(count, s)


def resolve_solver(solver: str, d: int, s: int) -> str:
    if solver == "auto":
        return "brute" if math.comb(d, s) <= AUTO_BRUTE_CAP else "greedy"
    if solver not in ("brute", "greedy", "tpm"):
        raise ValueError(f"unknown solver {solver!r}")
    return solver


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------

def _gather_principal(m: NDArray, idx: NDArray) -> NDArray:
    """Principal submatrices of a single (d, d) matrix: idx (..., k) -> (..., k, k)."""
    return m[idx[..., :, None], idx[..., None, :]]


def _gather_principal_stack(a: NDArray, idx: NDArray) -> NDArray:
    """Per-replicate principal submatrices: a (B, d, d), idx (B, ..., k)."""
    b = a.shape[0]
    batch = np.arange(b).reshape((b,) + (1,) * idx.ndim)
    return a[batch, idx[..., :, None], idx[..., None, :]]


def _chol_stack(dsub: NDArray, idx: NDArray | None = None) -> NDArray:
    """Batched Cholesky with the pivot tolerance of :func:`royboot.linalg.cholesky`.

    On failure raises :class:`NotPositiveDefiniteError` naming the first
    offending support (lexicographically, when ``idx`` is supplied).
    """
    try:
        low = np.linalg.cholesky(dsub)
    except np.linalg.LinAlgError:
        low = None
    if low is not None:
        piv = np.square(np.diagonal(low, axis1=-2, axis2=-1))
        maxdiag = np.max(np.diagonal(dsub, axis1=-2, axis2=-1), axis=-1)
        if np.all(piv > (PIVOT_RTOL * maxdiag)[..., None]):
            return low
    k = dsub.shape[-1]
    flat = dsub.reshape(-1, k, k)
    flat_idx = idx.reshape(-1, k) if idx is not None else None
    for i in range(flat.shape[0]):
        try:
            linalg.cholesky(flat[i])
        except NotPositiveDefiniteError as exc:
            support = tuple(int(j) for j in flat_idx[i]) if flat_idx is not None else None
            raise NotPositiveDefiniteError(
                f"denominator not positive definite on support {support}: {exc}",
                pivot_index=exc.pivot_index, support=support) from exc
    raise NotPositiveDefiniteError("denominator not positive definite")


def _abs_extreme(vals: NDArray) -> NDArray:
    """max(|lambda_min|, |lambda_max|) from ascending eigenvalues (..., k)."""
    return np.maximum(np.abs(vals[..., 0]), np.abs(vals[..., -1]))


def _values_for_supports(a: NDArray, idx: NDArray, mode: _Mode,
                         denom: NDArray | None) -> NDArray:
    """Objective values for supports of one matrix.  idx (..., k) -> (...)."""
    asub = _gather_principal(a, idx)
    if mode == "whiten_abs":
        low = _chol_stack(_gather_principal(denom, idx), idx)
        tinv = np.linalg.inv(low)
        w = tinv @ asub @ np.swapaxes(tinv, -1, -2)
        return _abs_extreme(np.linalg.eigvalsh(w))
    vals = np.linalg.eigvalsh(asub)
    return vals[..., -1] if mode == "plain_max" else _abs_extreme(vals)


def _values_for_stack(a_stack: NDArray, idx: NDArray, mode: _Mode,
                      denom: NDArray | None) -> NDArray:
    """Objective values for per-replicate supports.  idx (B, ..., k) -> (B, ...)."""
    asub = _gather_principal_stack(a_stack, idx)
    if mode == "whiten_abs":
        low = _chol_stack(_gather_principal(denom, idx), idx)
        tinv = np.linalg.inv(low)
        w = tinv @ asub @ np.swapaxes(tinv, -1, -2)
        return _abs_extreme(np.linalg.eigvalsh(w))
    vals = np.linalg.eigvalsh(asub)
    return vals[..., -1] if mode == "plain_max" else _abs_extreme(vals)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------

def _brute_stack(a_stack: NDArray, s: int, mode: _Mode, denom: NDArray | None,
                 want_argmax: bool = False,
                 cap: int = ENUMERATION_CAP):
    """Exact objective over all supports for each matrix in the stack.

    Returns (values (B,), supports (B, s) or None).  The denominator
    factorizations are computed once and shared across the whole stack.
    """
    nrep, d, _ = a_stack.shape
    supports = enumerate_supports(d, s, cap=cap)
    nsup = supports.shape[0]
    tinv = None
    if mode == "whiten_abs":
        low = _chol_stack(_gather_principal(denom, supports), supports)
        tinv = np.linalg.inv(low)
    values = np.empty(nrep)
    arg = np.empty(nrep, dtype=np.intp) if want_argmax else None
    block = max(1, _ELEM_BUDGET // max(1, nsup * s * s))
    for lo in range(0, nrep, block):
        hi = min(nrep, lo + block)
        asub = a_stack[lo:hi][:, supports[:, :, None], supports[:, None, :]]
        if mode == "whiten_abs":
            w = tinv @ asub @ np.swapaxes(tinv, -1, -2)
            per = _abs_extreme(np.linalg.eigvalsh(w))
        else:
            vals = np.linalg.eigvalsh(asub)
            per = vals[..., -1] if mode == "plain_max" else _abs_extreme(vals)
        best = np.argmax(per, axis=1)           # first max = smallest support
        values[lo:hi] = per[np.arange(hi - lo), best]
        if want_argmax:
            arg[lo:hi] = best
    return values, (supports[arg] if want_argmax else None)


# ---------------------------------------------------------------------------
# greedy forward selection + swap refinement
# ---------------------------------------------------------------------------

def greedy_support_search(evaluate: Callable[[NDArray], NDArray], d: int,
                          s: int) -> tuple[int, ...]:
    """Forward-greedy support search with one-coordinate swap refinement.

    ``evaluate`` maps an integer array of supports, shape (B, k), to their
    objective values, shape (B,).  Starting from the best singleton, the
    coordinate maximizing the enlarged support's objective is added until the
    support has size ``s``; then single-coordinate swaps are applied while
    they strictly improve the objective.  Ties are broken toward the smallest
    coordinate index, so the search is deterministic.
    """
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    if s == d:
        return tuple(range(d))
    singles = np.arange(d, dtype=np.intp)[:, None]
    vals = np.asarray(evaluate(singles))
    best = int(np.argmax(vals))
    support = np.array([best], dtype=np.intp)
    value = float(vals[best])
    for _ in range(s - 1):
        comp = np.setdiff1d(np.arange(d, dtype=np.intp), support)
        cand = np.sort(np.concatenate(
            [np.broadcast_to(support, (comp.size, support.size)),
             comp[:, None]], axis=1), axis=1)
        vals = np.asarray(evaluate(cand))
        j = int(np.argmax(vals))
        support = cand[j]
        value = float(vals[j])
    improved = True
    while improved:
        improved = False
        comp = np.setdiff1d(np.arange(d, dtype=np.intp), support)
        cand = np.broadcast_to(support, (s, comp.size, s)).copy()
        for p in range(s):
            cand[p, :, p] = comp
        cand = np.sort(cand.reshape(s * comp.size, s), axis=1)
        vals = np.asarray(evaluate(cand))
        j = int(np.argmax(vals))
        if float(vals[j]) > value:
            support = cand[j]
            value = float(vals[j])
            improved = True
    return tuple(int(i) for i in support)


def _greedy_lockstep(a_stack: NDArray, s: int, mode: _Mode,
                     denom: NDArray | None) -> tuple[NDArray, NDArray]:
    """Run the greedy search simultaneously for every matrix in the stack.

    Same candidate ordering and tie-break rules as
    :func:`greedy_support_search`; returns (values (B,), supports (B, s)).
    """
    nrep, d, _ = a_stack.shape
    if s == d:
        idx = np.broadcast_to(np.arange(d, dtype=np.intp), (nrep, 1, d))
        vals = _values_for_stack(a_stack, idx, mode, denom)[:, 0]
        return vals, np.broadcast_to(np.arange(d, dtype=np.intp), (nrep, d)).copy()
    diag = np.diagonal(a_stack, axis1=1, axis2=2)
    if mode == "whiten_abs":
        single = np.abs(diag) / np.diag(denom)[None, :]
    elif mode == "plain_abs":
        single = np.abs(diag)
    else:
        single = diag
    best = np.argmax(single, axis=1)
    support = best[:, None].astype(np.intp)
    value = single[np.arange(nrep), best]
    rows = np.arange(nrep)
    for k in range(1, s):
        in_support = np.zeros((nrep, d), dtype=bool)
        in_support[rows[:, None], support] = True
        comp = np.argsort(in_support, axis=1, kind="stable")[:, :d - k].astype(np.intp)
        cand = np.sort(np.concatenate(
            [np.broadcast_to(support[:, None, :], (nrep, d - k, k)),
             comp[:, :, None]], axis=2), axis=2)
        vals = _chunked_stack_values(a_stack, cand, mode, denom)
        j = np.argmax(vals, axis=1)
        support = cand[rows, j]
        value = vals[rows, j]
    active = np.ones(nrep, dtype=bool)
    nswap = s * (d - s)
    while np.any(active):
        act = np.nonzero(active)[0]
        sub_support = support[act]
        in_support = np.zeros((act.size, d), dtype=bool)
        in_support[np.arange(act.size)[:, None], sub_support] = True
        comp = np.argsort(in_support, axis=1, kind="stable")[:, :d - s].astype(np.intp)
        cand = np.broadcast_to(sub_support[:, None, None, :],
                               (act.size, s, d - s, s)).copy()
        for p in range(s):
            cand[:, p, :, p] = comp
        cand = np.sort(cand.reshape(act.size, nswap, s), axis=2)
        vals = _chunked_stack_values(a_stack[act], cand, mode, denom)
        j = np.argmax(vals, axis=1)
        best_val = vals[np.arange(act.size), j]
        improved = best_val > value[act]
        winners = act[improved]
        support[winners] = cand[improved, j[improved]]
        value[winners] = best_val[improved]
        active[act[~improved]] = False
    return value, support


def _chunked_stack_values(a_stack: NDArray, idx: NDArray, mode: _Mode,
                          denom: NDArray | None) -> NDArray:
    """_values_for_stack with replicate-axis chunking to bound peak memory."""
    per_row = int(np.prod(idx.shape[1:])) * idx.shape[-1]
    block = max(1, _ELEM_BUDGET // max(1, per_row))
    if block >= idx.shape[0]:
        return _values_for_stack(a_stack, idx, mode, denom)
    out = np.empty(idx.shape[:-1])
    for lo in range(0, idx.shape[0], block):
        hi = min(idx.shape[0], lo + block)
        out[lo:hi] = _values_for_stack(a_stack[lo:hi], idx[lo:hi], mode, denom)
    return out


# ---------------------------------------------------------------------------
# truncated power method
# ---------------------------------------------------------------------------

def _truncate_to_s(y: NDArray, s: int) -> NDArray:
    """Zero all but the s largest-magnitude coordinates (stable tie-break)."""
    if s >= y.size:
        return y
    keep = np.argsort(-np.abs(y), kind="stable")[:s]
    out = np.zeros_like(y)
    out[keep] = y[keep]
    return out


def truncated_power_max(m: NDArray, s: int, restarts: int = 10,
                        iter_cap: int = 200, seed: int = 0) -> RestrictedEigResult:
    """Truncated power iteration for the restricted largest eigenvalue.

    The iteration v <- truncate(M v, s) / ||.|| is run on M shifted by
    max(0, max_i(sum_{j != i} |M_ij| - M_ii)) * I, a Gershgorin bound that
    makes the iterate matrix positive semidefinite so the Rayleigh quotient
    ascends monotonically.  Starts are the canonical basis vectors of the s
    largest diagonal entries followed by seeded random s-sparse directions,
    ``restarts`` in total.  Always returns a feasible lower bound
    (``certified_exact`` is False).
    """
    mat = linalg.check_symmetric(m)
    d = mat.shape[0]
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    diag = np.diag(mat)
    shift = max(0.0, float(np.max(np.sum(np.abs(mat), axis=1) - np.abs(diag) - diag)))
    shifted = mat + shift * np.eye(d)
    order = np.argsort(-diag, kind="stable")
    starts = []
    for i in range(min(restarts, s)):
        e = np.zeros(d)
        e[order[i]] = 1.0
        starts.append(e)
    for r in range(max(0, restarts - s)):
        rng = substream(seed, "tpm-restart", r)
        sup = np.sort(rng.choice(d, size=s, replace=False))
        v = np.zeros(d)
        coords = rng.standard_normal(s)
        norm = np.linalg.norm(coords)
        v[sup] = coords / (norm if norm > 0 else 1.0)
        starts.append(v)
    best_val = -np.inf
    best_vec = starts[0]
    for v in starts:
        for _ in range(iter_cap):
            y = _truncate_to_s(shifted @ v, s)
            norm = np.linalg.norm(y)
            if norm == 0.0:
                break
            y /= norm
            if np.linalg.norm(y - v) <= 1e-13:
                v = y
                break
            v = y
        val = float(v @ mat @ v)
        if val > best_val:
            best_val = val
            best_vec = v
    support = tuple(int(i) for i in np.nonzero(best_vec)[0])
    vec = _canonical_sign(best_vec / np.linalg.norm(best_vec))
    return RestrictedEigResult(value=best_val, support=support, vector=vec,
                               solver="tpm", certified_exact=False)


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------

def _canonical_sign(v: NDArray) -> NDArray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _result_on_support(a: NDArray, denom: NDArray | None, support: NDArray,
                       mode: _Mode, solver: str, exact: bool) -> RestrictedEigResult:
    """Exact value and attaining unit vector of the objective on one support."""
    idx = np.asarray(support, dtype=np.intp)
    asub = _gather_principal(a, idx)
    d = a.shape[0]
    if mode == "whiten_abs":
        low = _chol_stack(_gather_principal(denom, idx)[None], idx[None])[0]
        tinv = np.linalg.inv(low)
        w = tinv @ asub @ tinv.T
        vals, vecs = np.linalg.eigh(w)
        pick = -1 if abs(vals[-1]) >= abs(vals[0]) else 0
        value = abs(float(vals[pick]))
        local = tinv.T @ vecs[:, pick]          # generalized eigenvector
    else:
        vals, vecs = np.linalg.eigh(asub)
        if mode == "plain_max":
            pick = -1
            value = float(vals[-1])
        else:
            pick = -1 if abs(vals[-1]) >= abs(vals[0]) else 0
            value = abs(float(vals[pick]))
        local = vecs[:, pick]
    vec = np.zeros(d)
    vec[idx] = local / np.linalg.norm(local)
    return RestrictedEigResult(
        value=value, support=tuple(int(i) for i in idx),
        vector=_canonical_sign(vec), solver=solver, certified_exact=exact)


def restricted_max_eig(m: NDArray, s: int, solver: SolverChoice = "auto",
                       seed: int = 0) -> RestrictedEigResult:
    """sup of v' M v over unit vectors with at most s nonzero coordinates.

    Equals the largest eigenvalue over all s x s principal submatrices.
    ``brute`` certifies exactness; ``greedy``/``tpm`` give lower bounds.
    """
    mat = linalg.check_symmetric(m)
    d = mat.shape[0]
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    choice = resolve_solver(solver, d, s)
    if choice == "brute":
        _, sup = _brute_stack(mat[None], s, "plain_max", None, want_argmax=True)
        return _result_on_support(mat, None, sup[0], "plain_max", "brute", True)
    if choice == "greedy":
        def evaluate(idx: NDArray) -> NDArray:
            return _values_for_supports(mat, idx, "plain_max", None)
        sup = greedy_support_search(evaluate, d, s)
        return _result_on_support(mat, None, np.asarray(sup), "plain_max",
                                  "greedy", False)
    return truncated_power_max(mat, s, seed=seed)


def restricted_min_eig(m: NDArray, s: int, solver: SolverChoice = "auto",
                       seed: int = 0) -> RestrictedEigResult:
    """inf of v' M v over the s-sparse unit sphere, via negation of the sup."""
    res = restricted_max_eig(-linalg.check_symmetric(m), s, solver, seed=seed)
    return RestrictedEigResult(
        value=-res.value, support=res.support, vector=res.vector,
        solver=res.solver, certified_exact=res.certified_exact)


def restricted_condition_number(sigma: NDArray, s: int,
                                solver: SolverChoice = "brute") -> float:
    """sqrt of (restricted largest / restricted smallest eigenvalue).

    Requires the matrix to be positive definite on every size-s support;
    otherwise raises :class:`NotPositiveDefiniteError`.
    """
    hi = restricted_max_eig(sigma, s, solver)
    lo = restricted_min_eig(sigma, s, solver)
    if lo.value <= 0:
        raise NotPositiveDefiniteError(
            f"restricted smallest eigenvalue {lo.value:.3e} <= 0 at s={s}",
            support=lo.support)
    return math.sqrt(hi.value / lo.value)


def restricted_normalized_sup(a: NDArray, sigma: NDArray, s: int,
                              solver: SolverChoice = "auto",
                              seed: int = 0) -> RestrictedEigResult:
    """sup of |v' a v| / (v' sigma v) over the s-sparse unit sphere.

    Per support the ratio's extremum is the spectral norm of the whitened
    submatrix, so the exact solver maximizes that norm over all supports.
    The returned vector is the attaining direction, unit Euclidean norm.
    """
    num = linalg.check_symmetric(a)
    den = linalg.check_symmetric(sigma)
    if num.shape != den.shape:
        raise ValueError("matrix dimensions differ")
    d = num.shape[0]
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    choice = resolve_solver(solver, d, s)
    if choice == "brute":
        _, sup = _brute_stack(num[None], s, "whiten_abs", den, want_argmax=True)
        return _result_on_support(num, den, sup[0], "whiten_abs", "brute", True)
    if choice == "greedy":
        def evaluate(idx: NDArray) -> NDArray:
            return _values_for_supports(num, idx, "whiten_abs", den)
        sup = greedy_support_search(evaluate, d, s)
        return _result_on_support(num, den, np.asarray(sup), "whiten_abs",
                                  "greedy", False)
    cands = []
    for signed in (num, -num):
        res = truncated_power_max(signed, s, seed=seed)
        keep = np.asarray(res.support, dtype=np.intp)
        if keep.size < s:   # pad to size s for a (weakly better) superset
            extra = np.setdiff1d(np.arange(d, dtype=np.intp), keep)[:s - keep.size]
            keep = np.sort(np.concatenate([keep, extra]))
        cands.append(keep)
    results = [_result_on_support(num, den, c, "whiten_abs", "tpm", False)
               for c in cands]
    results.sort(key=lambda r: (-r.value, r.support))
    return results[0]


def sup_values_for_stack(a_stack: NDArray, s: int, *,
                         denom: NDArray | None = None,
                         solver: str = "auto", seed: int = 0) -> NDArray:
    """Restricted sup values for a stack of symmetric matrices, shape (B,).

    With ``denom`` the objective is the normalized ratio (denominator shared
    across the stack, its per-support factorizations computed once); without
    it, the plain restricted spectral norm max |eigenvalue|.  This is the
    bootstrap hot path: it returns values only.
    """
    nrep, d, _ = a_stack.shape
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    mode: _Mode = "whiten_abs" if denom is not None else "plain_abs"
    choice = resolve_solver(solver, d, s)
    if choice == "brute":
        values, _ = _brute_stack(a_stack, s, mode, denom)
        return values
    if choice == "greedy":
        values, _ = _greedy_lockstep(a_stack, s, mode, denom)
        return values
    values = np.empty(nrep)
    for b in range(nrep):
        if denom is None:
            hi = truncated_power_max(a_stack[b], s, seed=seed)
            lo = truncated_power_max(-a_stack[b], s, seed=seed)
            values[b] = max(hi.value, lo.value)
        else:
            values[b] = restricted_normalized_sup(
                a_stack[b], denom, s, solver="tpm", seed=seed).value
    return values
