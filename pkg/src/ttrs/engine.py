"""Core-recovery pipeline: trimming, system forming, least-squares solves.

The pipeline turns sketched moments into tensor-train cores by solving
one small matrix equation per core. Two variants share the stages:

* the recursive path forms each coefficient matrix A_k by contracting
  the left block s_k with the trimmed factor B_k, and
* the non-recursive path keeps the projections q_{k+1} = V_k Sigma_k^{-1}
  from trimming and forms A_k from the retained psi contractions instead.

Both reduce each equation to a constant size in d, which is what makes
the per-core estimates statistically stable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, RankError, ShapeError
from .sketching import SketchPlan, run_sketching, run_sketching_tts
from .tensor_core import DEFAULT_DENSE_CAP, TensorTrain

# Relative singular-value cutoff for pseudoinverse solves; robust to the
# near-rank-deficient coefficient matrices that arise at small N.
LSTSQ_RCOND = 1e-12

# Conditioning threshold below which a solve is flagged (not failed).
ILL_CONDITION_TOL = 1e-10


@dataclass
class TrimResult:
    """Orthonormal factors from the SVD truncation of the sketched moments."""

    bs: list
    singular_values: list
    ranks: tuple[int, ...]
    projections: list | None = None  # q_{k+1} = V_k Sigma_k^{-1}, kept on request


@dataclass
class SystemMatrices:
    """Per-core coefficient matrices with conditioning diagnostics."""

    mats: list
    sigma_min: list
    sigma_max: list


@dataclass
class FitReport:
    """Diagnostics of one fit: requested and effective ranks, residual
    norms of the per-core solves, conditioning, stage wall times."""

    ranks: tuple[int, ...] = ()
    effective_ranks: tuple[int, ...] = ()
    residuals: list = field(default_factory=list)
    sigma_min: list = field(default_factory=list)
    sigma_max: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def wall_seconds(self) -> float:
        return float(sum(self.timings.values()))

    def to_json(self) -> dict:
        return {
            "ranks": list(self.ranks),
            "effective_ranks": list(self.effective_ranks),
            "residuals": [float(r) for r in self.residuals],
            "sigma_min": [float(s) for s in self.sigma_min],
            "sigma_max": [float(s) for s in self.sigma_max],
            "warnings": list(self.warnings),
            "timings": {k: float(v) for k, v in self.timings.items()},
        }


def _as_matrix(phi: np.ndarray) -> np.ndarray:
    """Unfold a sketched moment grouping (beta_{k-1}, x_k) as rows."""
    if phi.ndim == 2:
        return phi
    return phi.reshape(phi.shape[0] * phi.shape[1], phi.shape[2])


def _fix_signs(u: np.ndarray, v: np.ndarray | None = None):
    """Deterministic sign convention: each left singular vector is scaled
    so its largest-magnitude entry is positive; v follows so u s v^T is
    unchanged."""
    picks = np.argmax(np.abs(u), axis=0)
    flips = np.where(u[picks, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    if v is None:
        return u * flips
    return u * flips, v * flips


def select_ranks(phis, tau: float = 1e-10) -> tuple[int, ...]:
    """Ranks by singular-value threshold: keep sigma_i > tau * sigma_1."""
    ranks = []
    for phi in phis[:-1]:
        svals = np.linalg.svd(_as_matrix(phi), compute_uv=False)
        if svals[0] == 0.0:
            raise DegenerateError("cannot pick a rank for a zero moment")
        ranks.append(int(np.sum(svals > tau * svals[0])))
    return tuple(ranks)


def trim(phis, ranks, keep_projections: bool = False) -> TrimResult:
    """SVD-truncate each sketched moment to its target rank.

    B_k holds the top-r_k left singular vectors of the unfolded moment;
    the final moment passes through untrimmed. With `keep_projections`
    the projections q_{k+1} = V_k Sigma_k^{-1} are retained for the
    non-recursive system-forming stage, which fails on singular spectra.
    """
    d = len(phis)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != d - 1:
        raise ShapeError(f"{len(ranks)} ranks for {d} moments")
    bs, svals_all = [], []
    projections = [] if keep_projections else None
    for k, phi in enumerate(phis[:-1], start=1):
        mat = _as_matrix(phi)
        r = ranks[k - 1]
        if r < 1 or r > min(mat.shape):
            raise RankError(
                f"rank {r} impossible for a {mat.shape[0]}x{mat.shape[1]} moment at k={k}"
            )
        if not np.any(mat):
            raise DegenerateError(f"sketched moment {k} is identically zero")
        u, svals, vt = np.linalg.svd(mat, full_matrices=False)
        u, vt_t = _fix_signs(u[:, :r], vt[:r].T)
        bs.append(u.reshape(phi.shape[:-1] + (r,)))
        svals_all.append(svals)
        if keep_projections:
            if svals[r - 1] <= ILL_CONDITION_TOL * svals[0]:
                raise DegenerateError(
                    f"singular value {r} of moment {k} vanishes; projection undefined"
                )
            projections.append(vt_t / svals[:r])
    bs.append(np.asarray(phis[-1], dtype=np.float64))
    return TrimResult(bs=bs, singular_values=svals_all, ranks=ranks, projections=projections)


def form_system(trim_result: TrimResult, plan: SketchPlan) -> SystemMatrices:
    """Contract each left block with its trimmed factor: A_1 = s_1 B_1 and
    A_k = sum over (x_k, beta_{k-1}) of s_k B_k. For window plans this is
    exactly the partial sum of B_k over the oldest window variable."""
    mats = []
    for k, b in enumerate(trim_result.bs[:-1], start=1):
        blk = plan.left_block(k)
        if k == 1:
            a = blk[:, :, 0] @ b
        else:
            if blk.shape[2] != b.shape[0] or blk.shape[1] != b.shape[1]:
                raise ShapeError(
                    f"left block {k} {blk.shape} does not match factor {b.shape}"
                )
            a = np.einsum("bxc,cxa->ba", blk, b)
        mats.append(a)
    return make_systems(mats)


def make_systems(mats) -> SystemMatrices:
    smin, smax = [], []
    for a in mats:
        svals = np.linalg.svd(a, compute_uv=False)
        smax.append(float(svals[0]))
        smin.append(float(svals[min(a.shape) - 1]))
    return SystemMatrices(mats=mats, sigma_min=smin, sigma_max=smax)


def solve_cores(systems: SystemMatrices, trim_result: TrimResult):
    """Solve the per-core matrix equations by least squares.

    G_1 is B_1 verbatim; each later core solves A_{k-1} G_k = B_k as one
    multi-right-hand-side problem through an SVD pseudoinverse with
    relative cutoff. Ill conditioning is flagged in the report, never
    fatal.
    """
    report = FitReport(sigma_min=list(systems.sigma_min), sigma_max=list(systems.sigma_max))
    d = len(trim_result.bs)
    cores = []
    b1 = trim_result.bs[0]
    cores.append(b1.reshape(1, *b1.shape))
    for k in range(2, d + 1):
        a = systems.mats[k - 2]
        b = trim_result.bs[k - 1]
        rhs = b.reshape(b.shape[0], -1)
        if systems.sigma_min[k - 2] <= ILL_CONDITION_TOL * max(systems.sigma_max[k - 2], 1.0):
            report.warnings.append(
                f"coefficient matrix {k - 1} nearly rank deficient "
                f"(sigma_min={systems.sigma_min[k - 2]:.3e})"
            )
        x, *_ = np.linalg.lstsq(a, rhs, rcond=LSTSQ_RCOND)
        report.residuals.append(float(np.linalg.norm(a @ x - rhs)))
        if k < d:
            cores.append(x.reshape(x.shape[0], b.shape[1], b.shape[2]))
        else:
            cores.append(x.reshape(x.shape[0], b.shape[1], 1))
    tt = TensorTrain(cores)
    report.ranks = trim_result.ranks
    report.effective_ranks = trim_result.ranks
    return tt, report


def fit_from_moments(phis, plan: SketchPlan, ranks):
    """Trim + form + solve, starting from precomputed sketched moments."""
    t0 = time.perf_counter()
    trimmed = trim(phis, ranks)
    t1 = time.perf_counter()
    systems = form_system(trimmed, plan)
    t2 = time.perf_counter()
    tt, report = solve_cores(systems, trimmed)
    t3 = time.perf_counter()
    report.timings.update(trim=t1 - t0, form_system=t2 - t1, solve=t3 - t2)
    return tt, report


def _normalize_ranks(phis, plan, ranks, allow_rank_clip, report_warnings):
    """Return (requested, effective) rank tuples, clipping if allowed."""
    d = plan.dims
    if ranks is None:
        selected = select_ranks(phis)
        return selected, selected
    if np.isscalar(ranks):
        ranks = [int(ranks)] * (d - 1)
    ranks = [int(r) for r in ranks]
    if len(ranks) != d - 1:
        raise ShapeError(f"{len(ranks)} ranks for d = {d}")
    out = []
    for k, r in enumerate(ranks, start=1):
        limit = min(_as_matrix(phis[k - 1]).shape)
        if r > plan.right_size(k) or r > limit:
            if not allow_rank_clip:
                raise RankError(
                    f"rank {r} exceeds sketch size at k={k} "
                    f"(l_k={plan.right_size(k)}, moment bound {limit})"
                )
            clipped = min(r, plan.right_size(k), limit)
            report_warnings.append(f"rank {r} clipped to {clipped} at k={k}")
            out.append(clipped)
        else:
            out.append(r)
    return tuple(ranks), tuple(out)


def tt_rs(p_hat, ranks, plan: SketchPlan, allow_rank_clip: bool = False,
          cap: int = DEFAULT_DENSE_CAP):
    """Recursive-sketching fit of a tensor train to a density.

    Parameters
    ----------
    p_hat : SampleSet or ndarray
        Empirical samples, or a small dense tensor contracted exactly.
    ranks : int, sequence, or None
        Target bond ranks; None picks them by singular-value threshold.
    plan : SketchPlan
        Must be recursive-compatible (both plan kinds here are).
    allow_rank_clip : bool
        Lower infeasible ranks to the sketch-supported maximum instead
        of raising; clips are recorded in the report.

    Returns
    -------
    (TensorTrain, FitReport)
    """
    t0 = time.perf_counter()
    phis = run_sketching(p_hat, plan, cap=cap)
    t1 = time.perf_counter()
    warnings = []
    requested, effective = _normalize_ranks(phis, plan, ranks, allow_rank_clip, warnings)
    tt, report = fit_from_moments(phis, plan, effective)
    report.ranks = requested
    report.effective_ranks = effective
    report.warnings = warnings + report.warnings
    report.timings["sketch"] = t1 - t0
    return tt, report


def tt_s(p_hat, ranks, plan: SketchPlan, allow_rank_clip: bool = False,
         cap: int = DEFAULT_DENSE_CAP):
    """Non-recursive sketching fit.

    Same sketched moments as :func:`tt_rs`, but the coefficient matrices
    come from the retained psi contractions and the trim projections
    (A_k = psi_k q_{k+1}), so the left sketches never need a recursive
    structure.
    """
    t0 = time.perf_counter()
    phis, psis = run_sketching_tts(p_hat, plan, cap=cap)
    t1 = time.perf_counter()
    warnings = []
    requested, effective = _normalize_ranks(phis, plan, ranks, allow_rank_clip, warnings)
    trimmed = trim(phis, effective, keep_projections=True)
    t2 = time.perf_counter()
    mats = [psi @ q for psi, q in zip(psis, trimmed.projections)]
    systems = make_systems(mats)
    t3 = time.perf_counter()
    tt, report = solve_cores(systems, trimmed)
    t4 = time.perf_counter()
    report.ranks = requested
    report.effective_ranks = effective
    report.warnings = warnings + report.warnings
    report.timings.update(sketch=t1 - t0, trim=t2 - t1, form_system=t3 - t2, solve=t4 - t3)
    return tt, report
