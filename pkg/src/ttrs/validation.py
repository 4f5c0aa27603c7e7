"""Oracles and diagnostics backing the recovery and stability claims.

Holds the brute-force core solver that works from full unfoldings (the
reference the sketched pipeline is checked against), a rotation-aligned
core distance, the stability constants of a chain model, and the sample
complexity estimate they imply.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import DegenerateError, RankError, ShapeError
from .markov import MarkovSpec, window_marginal
from .sketching import markov_sketch_plan
from .tensor_core import TensorTrain, triple_norm, unfold

_RANK_TOL = 1e-9


@dataclass
class CoreDistanceResult:
    """Upper bound on the rotation-aligned core distance."""

    distance: float
    rotation_left: np.ndarray
    rotation_right: np.ndarray
    iterations: int
    converged: bool


@dataclass
class DiagnosticsReport:
    """Stability constants of a chain model at given ranks.

    c_p is the smallest retained singular value over the designated
    marginal unfoldings, c_g the smallest core triple norm of the exact
    fit, c_a the largest pseudoinverse norm of the coefficient matrices
    (at least 1).
    """

    c_p: float
    c_g: float
    c_a: float
    ranks: tuple[int, ...]
    marginal_spectra: list
    system_sigma_min: list

    def to_json(self) -> str:
        return json.dumps(
            {
                "c_p": self.c_p,
                "c_g": self.c_g,
                "c_a": self.c_a,
                "ranks": list(self.ranks),
                "marginal_spectra": [list(map(float, s)) for s in self.marginal_spectra],
                "system_sigma_min": [float(s) for s in self.system_sigma_min],
            }
        )


def solve_cde_full(p: np.ndarray, ranks, rank_tol: float = _RANK_TOL) -> TensorTrain:
    """Reference solver working from full (unsketched) unfolding matrices.

    Forms the left singular factor of every unfolding and solves the
    resulting core equations exactly; exponential cost by design, so it
    only runs at test scale (<= 1e5 entries).
    """
    p = np.asarray(p, dtype=np.float64)
    d = p.ndim
    if p.size > 100_000:
        raise ShapeError("reference solver is capped at 1e5 entries")
    ranks = tuple(int(r) for r in (ranks if not np.isscalar(ranks) else [ranks] * (d - 1)))
    if len(ranks) != d - 1:
        raise ShapeError(f"{len(ranks)} ranks for d = {d}")
    factors = []
    for k in range(1, d):
        mat = unfold(p, k)
        u, svals, _ = np.linalg.svd(mat, full_matrices=False)
        numerical = int(np.sum(svals > rank_tol * svals[0])) if svals[0] > 0 else 0
        if numerical != ranks[k - 1]:
            raise RankError(
                f"unfolding {k} has numerical rank {numerical}, declared {ranks[k - 1]}"
            )
        factors.append(engine._fix_signs(u[:, : ranks[k - 1]]))
    cores = [factors[0].reshape(1, p.shape[0], ranks[0])]
    for k in range(2, d + 1):
        lhs = factors[k - 2]
        if k < d:
            rhs = factors[k - 1].reshape(lhs.shape[0], -1)
            sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=engine.LSTSQ_RCOND)
            cores.append(sol.reshape(ranks[k - 2], p.shape[k - 1], ranks[k - 1]))
        else:
            rhs = p.reshape(lhs.shape[0], -1)
            sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=engine.LSTSQ_RCOND)
            cores.append(sol.reshape(ranks[d - 2], p.shape[d - 1], 1))
    return TensorTrain(cores)


def _rotate(core: np.ndarray, r_left: np.ndarray, r_right: np.ndarray) -> np.ndarray:
    return np.einsum("ab,bnc,cd->and", r_left, core, r_right)


def _polar(mat: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(mat)
    return u @ vt


def core_distance(g_hat: np.ndarray, g_star: np.ndarray, max_iter: int = 100,
                  tol: float = 1e-10, restarts: int = 4) -> CoreDistanceResult:
    """Distance between cores minimized over rotations of both bond spaces.

    Alternates closed-form orthogonal Procrustes solves on the two mode
    unfoldings of the Frobenius objective, then reports the triple norm
    of the aligned difference. The result is an upper bound on the true
    minimum (identity rotations are always feasible, and a few seeded
    restarts guard against poor stationary points).
    """
    g_hat = np.asarray(g_hat, dtype=np.float64)
    g_star = np.asarray(g_star, dtype=np.float64)
    if g_hat.shape != g_star.shape:
        raise ShapeError(f"core shapes differ: {g_hat.shape} vs {g_star.shape}")
    r1, _, r2 = g_star.shape
    rng = np.random.default_rng(0)

    def alternate(r_left, r_right):
        prev = np.inf
        iters = 0
        converged = False
        for _ in range(max_iter):
            iters += 1
            rotated = np.einsum("bnc,cd->bnd", g_star, r_right)
            r_left = _polar(g_hat.reshape(r1, -1) @ rotated.reshape(r1, -1).T)
            rotated = np.einsum("ab,bnc->anc", r_left, g_star)
            m3 = g_hat.transpose(2, 0, 1).reshape(r2, -1) @ rotated.transpose(
                2, 0, 1
            ).reshape(r2, -1).T
            r_right = _polar(m3).T
            cur = np.linalg.norm(g_hat - _rotate(g_star, r_left, r_right))
            if prev - cur <= tol:
                converged = True
                break
            prev = cur
        return r_left, r_right, iters, converged

    best = CoreDistanceResult(
        distance=triple_norm(g_hat - g_star),
        rotation_left=np.eye(r1),
        rotation_right=np.eye(r2),
        iterations=0,
        converged=True,
    )
    inits = [(np.eye(r1), np.eye(r2))]
    for _ in range(restarts):
        inits.append((_polar(rng.standard_normal((r1, r1))),
                      _polar(rng.standard_normal((r2, r2)))))
    for r_left0, r_right0 in inits:
        r_left, r_right, iters, converged = alternate(r_left0, r_right0)
        dist = triple_norm(g_hat - _rotate(g_star, r_left, r_right))
        if dist < best.distance:
            best = CoreDistanceResult(dist, r_left, r_right, iters, converged)
    return best


def exact_markov_fit(spec: MarkovSpec, ranks=None):
    """Fit the exact chain density through the window-sketch pipeline.

    The sketched moments are exact window marginals computed from the
    spec, so this works at any d without materializing the density;
    the result is the noise-free reference core set.
    """
    plan = markov_sketch_plan(spec.extents, order=spec.order)
    d = spec.d
    phis = []
    for k in range(1, d + 1):
        lo = plan.left_window(k - 1)[0] if k > 1 else k
        hi = plan.right_window(k)[1] if k < d else k
        marg = window_marginal(spec, lo, hi)
        if k == 1:
            phis.append(marg.reshape(spec.extents[0], -1))
        elif k == d:
            phis.append(marg.reshape(-1, spec.extents[d - 1]))
        else:
            phis.append(
                marg.reshape(plan.left_size(k - 1), spec.extents[k - 1], plan.right_size(k))
            )
    if ranks is None:
        ranks = engine.select_ranks(phis)
    trimmed = engine.trim(phis, ranks)
    systems = engine.form_system(trimmed, plan)
    tt, report = engine.solve_cores(systems, trimmed)
    return tt, systems, report


def compute_constants(spec: MarkovSpec, ranks=None) -> DiagnosticsReport:
    """Stability constants from exact marginals and the exact fit."""
    tt, systems, report = exact_markov_fit(spec, ranks=ranks)
    ranks = report.effective_ranks
    d = spec.d
    spectra = []
    c_p = np.inf
    for k in range(1, d):
        if k == 1:
            marg = window_marginal(spec, 1, 2)
            mat = marg.reshape(spec.extents[0], -1)
        else:
            marg = window_marginal(spec, k - 1, k + 1)
            mat = marg.reshape(spec.extents[k - 2] * spec.extents[k - 1], -1)
        svals = np.linalg.svd(mat, compute_uv=False)
        spectra.append(svals)
        r_k = min(ranks[k - 1], len(svals))
        c_p = min(c_p, float(svals[r_k - 1]))
    c_g = min(triple_norm(c) for c in tt.cores)
    c_a = max(1.0, max(1.0 / s for s in systems.sigma_min))
    return DiagnosticsReport(
        c_p=float(c_p),
        c_g=float(c_g),
        c_a=float(c_a),
        ranks=tuple(ranks),
        marginal_spectra=spectra,
        system_sigma_min=list(systems.sigma_min),
    )


def check_sample_complexity(report: DiagnosticsReport, n: int, r: int, d: int,
                            delta: float, eta: float):
    """Sample sizes sufficient for per-core accuracy delta and for
    contraction accuracy delta, both at confidence 1 - eta.

    The dimension enters the per-core bound only through log(2 n^3 d /
    eta); the contraction bound carries an extra d^2 factor.
    """
    if report.c_p <= 0 or report.c_g <= 0 or report.c_a <= 0:
        raise DegenerateError("constants must be positive")
    if not 0 < delta < 1 or not 0 < eta < 1:
        raise ValueError("delta and eta must lie in (0, 1)")
    common = (
        report.c_a**2
        * (1.0 + 1.0 / report.c_g) ** 2
        * (1.0 + 1.0 / report.c_p) ** 2
        * n**5
        * r
        * np.log(2.0 * n**3 * d / eta)
    )
    n_core = 16.0 * common / delta**2
    n_contraction = 144.0 * common * d**2 / delta**2
    return float(n_core), float(n_contraction)


def concentration_bound(n_states: int, count: int, n_samples: int, eta: float) -> float:
    """Hoeffding + union bound on the sup deviation of an empirical
    marginal with n_states cells, unioned over `count` such marginals."""
    return float(np.sqrt(np.log(2.0 * n_states * count / eta) / (2.0 * n_samples)))
