"""Sketch plans and the sketching sweep that produces the reduced moments.

Two plan kinds cover everything the pipeline needs:

* window-identity plans marginalize onto sliding variable windows (the
  construction that makes Markov-structured densities exactly
  recoverable), and

* dense plans hold explicit per-variable blocks: left blocks s_k of
  shape (m_k, n_k, m_{k-1}) composed recursively into the left sketches
  S_k, and right blocks t_k of shape (l_{k-1}, n_k, l_k) whose chain
  contraction forms each right sketch T_k. Factoring the right sketches
  per variable keeps the per-sample work O(d l^2); an unstructured right
  sketch over all trailing variables would reintroduce exponential cost
  and is deliberately unsupported.

For a sample-set input the sweep accumulates every moment sample by
sample; for a small dense tensor it contracts exactly, which is the
brute-force oracle used by the tests.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .empirical import SampleSet, marginal, sketched_moment
from .errors import ShapeError
from .tensor_core import DEFAULT_DENSE_CAP

__all__ = [
    "SketchPlan",
    "markov_sketch_plan",
    "gaussian_sketch_plan",
    "dense_sketch_plan",
    "run_sketching",
    "run_sketching_tts",
    "plan_to_json",
    "plan_from_json",
]


@dataclass(frozen=True)
class SketchPlan:
    """Right sketches T_k and left sketch blocks s_k for one fit.

    Exactly one of the two representations is populated: `order` for
    window-identity plans, or the dense block lists.
    """

    extents: tuple[int, ...]
    order: int | None = None
    left_blocks: tuple | None = None
    right_blocks: tuple | None = None

    def __post_init__(self):
        d = len(self.extents)
        if d < 2:
            raise ShapeError("plans need at least two variables")
        if (self.order is None) == (self.left_blocks is None):
            raise ShapeError("exactly one of order / dense blocks must be set")
        if self.order is not None:
            if self.order < 1:
                raise ValueError("window order must be >= 1")
            if self.order >= d:
                raise ValueError(f"window order {self.order} must be < d = {d}")
        else:
            left, right = self.left_blocks, self.right_blocks
            if len(left) != d - 1 or len(right) != d - 1:
                raise ShapeError("need d-1 left blocks and d-1 right blocks")
            prev_m = 1
            for k, blk in enumerate(left, start=1):
                if blk.shape[1] != self.extents[k - 1] or blk.shape[2] != prev_m:
                    raise ShapeError(f"left block {k} has shape {blk.shape}")
                prev_m = blk.shape[0]
            next_l = 1
            for k in range(d, 1, -1):
                blk = right[k - 2]
                if blk.shape[1] != self.extents[k - 1] or blk.shape[2] != next_l:
                    raise ShapeError(f"right block {k} has shape {blk.shape}")
                next_l = blk.shape[0]

    @property
    def kind(self) -> str:
        return "window" if self.order is not None else "dense"

    @property
    def dims(self) -> int:
        return len(self.extents)

    # -- window geometry ------------------------------------------------
    def left_window(self, k: int) -> tuple[int, int]:
        """Variables covered by the left sketch S_k (1-based inclusive)."""
        return (max(1, k - self.order + 1), k)

    def right_window(self, k: int) -> tuple[int, int]:
        """Variables covered by the right sketch T_{k+1}."""
        return (k + 1, min(self.dims, k + self.order))

    def _window_size(self, lo: int, hi: int) -> int:
        return int(np.prod([self.extents[j - 1] for j in range(lo, hi + 1)], initial=1))

    # -- sketch sizes ----------------------------------------------------
    def left_size(self, k: int) -> int:
        """m_k, the number of rows of S_k (m_0 = 1)."""
        if k == 0:
            return 1
        if self.kind == "window":
            return self._window_size(*self.left_window(k))
        return self.left_blocks[k - 1].shape[0]

    def right_size(self, k: int) -> int:
        """l_k, the number of columns of T_{k+1} (l_d = 1)."""
        if k == self.dims:
            return 1
        if self.kind == "window":
            return self._window_size(*self.right_window(k))
        return self.right_blocks[k - 1].shape[0]

    def left_block(self, k: int) -> np.ndarray:
        """Materialize s_k as an (m_k, n_k, m_{k-1}) array.

        For window plans this is the one-hot block that appends x_k to
        the running window and drops the oldest variable once the window
        is full; composing these blocks reproduces the window selector.
        """
        if self.kind == "dense":
            return self.left_blocks[k - 1]
        n_k = self.extents[k - 1]
        m_k = self.left_size(k)
        m_prev = self.left_size(k - 1)
        blk = np.zeros((m_k, n_k, m_prev))
        if k == 1:
            blk[:, :, 0] = np.eye(n_k)
            return blk
        prev_lo, prev_hi = self.left_window(k - 1)
        prev_shape = tuple(self.extents[j - 1] for j in range(prev_lo, prev_hi + 1))
        new_lo, _ = self.left_window(k)
        drop_first = new_lo > prev_lo
        new_shape = tuple(self.extents[j - 1] for j in range(new_lo, k + 1))
        for beta_prev in range(m_prev):
            prev_state = np.unravel_index(beta_prev, prev_shape)
            kept = prev_state[1:] if drop_first else prev_state
            for x in range(n_k):
                beta_new = int(np.ravel_multi_index(kept + (x,), new_shape))
                blk[beta_new, x, beta_prev] = 1.0
        return blk

    def validate_extents(self, extents) -> None:
        if tuple(int(n) for n in extents) != self.extents:
            raise ShapeError(
                f"plan extents {self.extents} do not match input {tuple(extents)}"
            )


def markov_sketch_plan(extents, order: int = 1) -> SketchPlan:
    """Window-identity plan whose sketches marginalize onto the sliding
    windows of an order-m Markov structure, so the sketching sweep
    outputs window marginals of the input density."""
    return SketchPlan(extents=tuple(int(n) for n in extents), order=int(order))


def gaussian_sketch_plan(extents, ell, m, seed: int = 0) -> SketchPlan:
    """Dense plan with i.i.d. standard normal blocks from a seeded RNG.

    `ell` and `m` give the per-position sketch sizes (scalars broadcast
    to all d-1 positions). Random sketches are a generic choice for
    exact-rank inputs, not a variance-reducing one; structured window
    plans are the right tool for sampled Markov data.
    """
    extents = tuple(int(n) for n in extents)
    d = len(extents)
    ells = [int(ell)] * (d - 1) if np.isscalar(ell) else [int(x) for x in ell]
    ms = [int(m)] * (d - 1) if np.isscalar(m) else [int(x) for x in m]
    if len(ells) != d - 1 or len(ms) != d - 1:
        raise ShapeError("need d-1 sketch sizes per side")
    rng = np.random.default_rng(seed)
    left = []
    prev_m = 1
    for k in range(1, d):
        left.append(rng.standard_normal((ms[k - 1], extents[k - 1], prev_m)))
        prev_m = ms[k - 1]
    right = [None] * (d - 1)
    next_l = 1
    for k in range(d, 1, -1):
        right[k - 2] = rng.standard_normal((ells[k - 2], extents[k - 1], next_l))
        next_l = ells[k - 2]
    return SketchPlan(extents=extents, left_blocks=tuple(left), right_blocks=tuple(right))


def dense_sketch_plan(extents, left_blocks, right_blocks) -> SketchPlan:
    """Dense plan from explicit block lists (shapes validated)."""
    return SketchPlan(
        extents=tuple(int(n) for n in extents),
        left_blocks=tuple(np.asarray(b, dtype=np.float64) for b in left_blocks),
        right_blocks=tuple(np.asarray(b, dtype=np.float64) for b in right_blocks),
    )


# ---------------------------------------------------------------------------
# sketching sweeps


def run_sketching(p_hat, plan: SketchPlan, cap: int = DEFAULT_DENSE_CAP) -> list:
    """Produce the sketched moments of the input density.

    Returns [phi_1, ..., phi_d] with phi_1 of shape (n_1, l_1), interior
    phi_k of shape (m_{k-1}, n_k, l_k), and phi_d of shape (m_{d-1}, n_d).
    """
    phis, _ = _sweep(p_hat, plan, want_psi=False, cap=cap)
    return phis


def run_sketching_tts(p_hat, plan: SketchPlan, cap: int = DEFAULT_DENSE_CAP):
    """Sketching sweep that also returns psi_k = S_k applied to the
    right-sketched unfolding, for k = 1..d-1 (the contractions the
    non-recursive pipeline feeds into its system-forming stage)."""
    return _sweep(p_hat, plan, want_psi=True, cap=cap)


def _sweep(p_hat, plan, want_psi, cap):
    if isinstance(p_hat, SampleSet):
        if not p_hat.is_discrete:
            raise ShapeError("sketching sweeps take discrete samples")
        plan.validate_extents(p_hat.extents)
        if plan.kind == "window":
            return _sweep_window_samples(p_hat, plan, want_psi, cap)
        return _sweep_dense_samples(p_hat, plan, want_psi)
    p = np.asarray(p_hat, dtype=np.float64)
    plan.validate_extents(p.shape)
    if np.prod([float(n) for n in p.shape]) > cap:
        raise ShapeError(f"dense input exceeds the {cap}-entry cap")
    if plan.kind == "window":
        return _sweep_window_dense(p, plan, want_psi)
    return _sweep_dense_dense(p, plan, want_psi)


def _phi_shape(plan, k):
    d = plan.dims
    if k == 1:
        return (plan.extents[0], plan.right_size(1))
    if k == d:
        return (plan.left_size(d - 1), plan.extents[d - 1])
    return (plan.left_size(k - 1), plan.extents[k - 1], plan.right_size(k))


def _sweep_window_samples(s, plan, want_psi, cap):
    d = plan.dims
    phis = []
    psis = [] if want_psi else None
    for k in range(1, d + 1):
        lo = plan.left_window(k - 1)[0] if k > 1 else k
        hi = plan.right_window(k)[1] if k < d else k
        freq = marginal(s, (lo, hi), cap=cap).frequency
        phis.append(freq.reshape(_phi_shape(plan, k)))
        if want_psi and k < d:
            lo_p, _ = plan.left_window(k)
            _, hi_p = plan.right_window(k)
            psi = marginal(s, (lo_p, hi_p), cap=cap).frequency
            psis.append(psi.reshape(plan.left_size(k), plan.right_size(k)))
    return phis, psis


def _sweep_window_dense(p, plan, want_psi):
    d = plan.dims

    def window_marg(lo, hi):
        axes = tuple(j for j in range(d) if not lo - 1 <= j <= hi - 1)
        return p.sum(axis=axes) if axes else p

    phis = []
    psis = [] if want_psi else None
    for k in range(1, d + 1):
        lo = plan.left_window(k - 1)[0] if k > 1 else k
        hi = plan.right_window(k)[1] if k < d else k
        phis.append(window_marg(lo, hi).reshape(_phi_shape(plan, k)))
        if want_psi and k < d:
            lo_p, _ = plan.left_window(k)
            _, hi_p = plan.right_window(k)
            psis.append(
                window_marg(lo_p, hi_p).reshape(plan.left_size(k), plan.right_size(k))
            )
    return phis, psis


def _push_states(states, block, codes):
    """Per-sample contraction with one (out, n, in)-shaped block."""
    out = np.empty((states.shape[0], block.shape[0]))
    for v in range(block.shape[1]):
        mask = codes == v + 1
        if mask.any():
            out[mask] = states[mask] @ block[:, v, :].T
    return out


def _sweep_dense_samples(s, plan, want_psi):
    d = plan.dims
    n = s.n_samples
    # Right states: row i of right[k] holds T_k(y_{k:d}^{(i)}, .).
    right = [None] * (d + 2)
    right[d + 1] = np.ones((n, 1))
    for k in range(d, 1, -1):
        right[k] = _push_states(right[k + 1], plan.right_blocks[k - 2], s.values[:, k - 1])
    phis = []
    psis = [] if want_psi else None
    left = np.ones((n, 1))  # S_0 phantom
    for k in range(1, d + 1):
        rstate = right[k + 1] if k < d else np.ones((n, 1))
        phi = sketched_moment(s, left if k > 1 else None, k, rstate if k < d else None)
        phis.append(phi.reshape(_phi_shape(plan, k)))
        if k < d:
            left = _push_states(left, plan.left_blocks[k - 1], s.values[:, k - 1])
            if want_psi:
                psis.append(left.T @ right[k + 1] / n)
    return phis, psis


def _sweep_dense_dense(p, plan, want_psi):
    d = plan.dims
    extents = plan.extents
    # Backward sweep of right-sketched unfoldings bar[k] (x_{1:k}, l_k).
    bars = [None] * (d + 1)
    bars[d] = p.reshape(p.shape + (1,))
    for k in range(d - 1, 0, -1):
        blk = plan.right_blocks[k - 1]  # t_{k+1}: (l_k, n_{k+1}, l_{k+1})
        nxt = bars[k + 1].reshape(-1, blk.shape[1] * blk.shape[2])
        bars[k] = (nxt @ blk.reshape(blk.shape[0], -1).T).reshape(
            extents[:k] + (blk.shape[0],)
        )
    # Forward sweep of composed left sketches as matrices over prefixes.
    sl = np.ones((1, 1))
    phis = []
    psis = [] if want_psi else None
    for k in range(1, d + 1):
        if k == 1:
            phis.append(bars[1].reshape(_phi_shape(plan, 1)))
        elif k < d:
            flat = bars[k].reshape(sl.shape[1], -1)
            phis.append((sl @ flat).reshape(_phi_shape(plan, k)))
        else:
            phis.append((sl @ p.reshape(sl.shape[1], -1)).reshape(_phi_shape(plan, d)))
        if k < d:
            blk = plan.left_blocks[k - 1]
            sl = np.einsum("bxc,cp->bpx", blk, sl).reshape(blk.shape[0], -1)
            if want_psi:
                psis.append(sl @ bars[k].reshape(-1, bars[k].shape[-1]))
    return phis, psis


# ---------------------------------------------------------------------------
# serialization


def _encode(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
    }


def _decode(payload: dict) -> np.ndarray:
    data = np.frombuffer(base64.b64decode(payload["data"]), dtype="<f8")
    return data.reshape(payload["shape"]).astype(np.float64)


def plan_to_json(plan: SketchPlan) -> str:
    doc = {"kind": plan.kind, "extents": list(plan.extents)}
    if plan.kind == "window":
        doc["order"] = plan.order
    else:
        doc["left_blocks"] = [_encode(b) for b in plan.left_blocks]
        doc["right_blocks"] = [_encode(b) for b in plan.right_blocks]
    return json.dumps(doc)


def plan_from_json(text: str) -> SketchPlan:
    doc = json.loads(text)
    extents = tuple(int(n) for n in doc["extents"])
    if doc["kind"] == "window":
        return SketchPlan(extents=extents, order=int(doc["order"]))
    return SketchPlan(
        extents=extents,
        left_blocks=tuple(_decode(b) for b in doc["left_blocks"]),
        right_blocks=tuple(_decode(b) for b in doc["right_blocks"]),
    )
