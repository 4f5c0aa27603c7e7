"""Ground-truth chain models and samplers.

Covers generic (possibly order-m, possibly homogeneous) Markov chains
over finite alphabets, the discretized and continuous Ginzburg-Landau
Boltzmann density, the order-2 Ising variant, exact tensor-train
construction for chain densities, and four samplers: exact ancestral
draws, systematic-scan Gibbs, random-walk Metropolis-Hastings on a box,
and conditional sampling from a fitted tensor train.

Chain normalization works in the log domain throughout so deep chains
neither underflow nor overflow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .empirical import SampleSet
from .errors import CapExceededError, DegenerateError, ShapeError
from .tensor_core import DEFAULT_DENSE_CAP, TensorTrain

_STOCH_TOL = 1e-12


@dataclass(frozen=True)
class MarkovSpec:
    """Initial window distribution plus transition kernels.

    `initial` is the joint over the first min(order, d) variables;
    `kernels[j]` holds P(x_{order+1+j} | x_{j+1:j+order}) with the
    conditioned variables as leading axes and the new variable last.
    """

    order: int
    extents: tuple[int, ...]
    initial: np.ndarray
    kernels: tuple = ()

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        d = len(self.extents)
        w = min(self.order, d)
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=np.float64))
        object.__setattr__(
            self, "kernels", tuple(np.asarray(k, dtype=np.float64) for k in self.kernels)
        )
        if self.initial.shape != self.extents[:w]:
            raise ShapeError(
                f"initial marginal shape {self.initial.shape} != extents {self.extents[:w]}"
            )
        if abs(self.initial.sum() - 1.0) > _STOCH_TOL or np.any(self.initial < 0):
            raise ShapeError("initial marginal must be a probability tensor")
        if len(self.kernels) != max(0, d - self.order):
            raise ShapeError(
                f"{len(self.kernels)} kernels for d={d}, order={self.order}"
            )
        for j, ker in enumerate(self.kernels):
            want = self.extents[j : j + self.order] + (self.extents[j + self.order],)
            if ker.shape != want:
                raise ShapeError(f"kernel {j} shape {ker.shape}, expected {want}")
            sums = ker.sum(axis=-1)
            if np.max(np.abs(sums - 1.0)) > _STOCH_TOL or np.any(ker < 0):
                raise ShapeError(f"kernel {j} is not stochastic over its last axis")

    @property
    def d(self) -> int:
        return len(self.extents)


def homogeneous_markov_spec(d: int, initial, kernel, order: int = 1) -> MarkovSpec:
    """Chain that reuses one transition kernel at every step, so its
    local statistics do not depend on d."""
    kernel = np.asarray(kernel, dtype=np.float64)
    n = kernel.shape[-1]
    extents = (n,) * d
    return MarkovSpec(order=order, extents=extents,
                      initial=initial, kernels=(kernel,) * max(0, d - order))


def random_markov_spec(d: int, n: int, order: int = 1, seed: int = 0,
                       homogeneous: bool = False) -> MarkovSpec:
    """Generic random chain (uniform-random weights, normalized); the
    unfolding ranks of such chains are full with probability one."""
    rng = np.random.default_rng(seed)
    extents = (n,) * d
    w = min(order, d)
    initial = rng.random((n,) * w) + 0.1
    initial /= initial.sum()
    def make_kernel():
        ker = rng.random((n,) * order + (n,)) + 0.1
        return ker / ker.sum(axis=-1, keepdims=True)
    if homogeneous:
        kernels = (make_kernel(),) * max(0, d - order)
    else:
        kernels = tuple(make_kernel() for _ in range(max(0, d - order)))
    return MarkovSpec(order=order, extents=extents, initial=initial, kernels=kernels)


# ---------------------------------------------------------------------------
# chain factor representations and normalization


@dataclass(frozen=True)
class ChainFactors:
    """Unnormalized chain density given by log window factors.

    log_factors[k] covers variables (x_{k+1}, ..., x_{k+1+order})
    (0-based list over 1-based windows); the density is proportional to
    exp(sum of factors).
    """

    extents: tuple[int, ...]
    order: int
    log_factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(n) for n in self.extents))
        object.__setattr__(
            self, "log_factors",
            tuple(np.asarray(f, dtype=np.float64) for f in self.log_factors),
        )
        d = len(self.extents)
        if d < self.order + 1:
            raise ShapeError("chain factors need d >= order + 1")
        if len(self.log_factors) != d - self.order:
            raise ShapeError(
                f"{len(self.log_factors)} factors for d={d}, order={self.order}"
            )
        for k, f in enumerate(self.log_factors):
            want = self.extents[k : k + self.order + 1]
            if f.shape != want:
                raise ShapeError(f"factor {k} shape {f.shape}, expected {want}")

    @property
    def d(self) -> int:
        return len(self.extents)


def chain_factors_to_markov(cf: ChainFactors) -> MarkovSpec:
    """Normalize a chain of window factors into a Markov spec by a
    backward log-domain sweep (transfer vectors over sliding windows)."""
    m = cf.order
    d = cf.d
    # Backward messages over windows (x_j, ..., x_{j+m-1}), j = 1..d-m+1.
    logb = [None] * (d - m + 1)
    logb[d - m] = np.zeros(cf.extents[d - m : d])
    for j in range(d - m - 1, -1, -1):
        t = cf.log_factors[j] + logb[j + 1][None, ...]
        logb[j] = logsumexp(t, axis=-1)
    log_init = logb[0] - logsumexp(logb[0])
    initial = np.exp(log_init)
    initial /= initial.sum()
    kernels = []
    for j in range(d - m):
        logk = cf.log_factors[j] + logb[j + 1][None, ...] - logb[j][..., None]
        ker = np.exp(logk - logk.max(axis=-1, keepdims=True))
        ker /= ker.sum(axis=-1, keepdims=True)
        kernels.append(ker)
    return MarkovSpec(order=m, extents=cf.extents, initial=initial, kernels=tuple(kernels))


# ---------------------------------------------------------------------------
# Ginzburg-Landau


@dataclass(frozen=True)
class GinzburgLandauSpec:
    """Boltzmann density of the 1-D Ginzburg-Landau potential on [a, b]^d
    with clamped boundary x_0 = x_{d+1} = 0."""

    d: int
    beta: float = 1.0
    lam: float = 1.0
    h: float = 1.0
    a: float = -4.0
    b: float = 4.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if min(self.beta, self.lam, self.h) <= 0:
            raise ValueError("beta, lambda, h must be positive")
        if not self.a < self.b:
            raise ValueError("interval must satisfy a < b")


def gl_energy(spec: GinzburgLandauSpec, x) -> np.ndarray:
    """Full exponent beta * sum_k [lam/2 ((x_k-x_{k+1})/h)^2 +
    (x_k^2-1)^2 / (4 lam)] including the clamped boundary terms;
    vectorized over leading axes of x."""
    x = np.asarray(x, dtype=np.float64)
    pad = np.zeros(x.shape[:-1] + (1,))
    xp = np.concatenate([pad, x, pad], axis=-1)
    diffs = (xp[..., :-1] - xp[..., 1:]) / spec.h
    quart = (xp[..., :-1] ** 2 - 1.0) ** 2
    return spec.beta * (
        0.5 * spec.lam * np.sum(diffs**2, axis=-1)
        + np.sum(quart, axis=-1) / (4.0 * spec.lam)
    )


def gl_grid(spec: GinzburgLandauSpec, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least 2 grid points")
    return np.linspace(spec.a, spec.b, n)


def gl_window_energies(spec: GinzburgLandauSpec, z: np.ndarray) -> list:
    """Pairwise window energies (inverse temperature included) evaluated
    on a point set z, boundary node terms folded into the end factors;
    the density exponent is minus their sum, up to an additive constant."""
    if spec.d < 2:
        raise ShapeError("pairwise window factors need d >= 2")
    z = np.asarray(z, dtype=np.float64)
    pair = (
        0.5 * spec.lam * ((z[:, None] - z[None, :]) / spec.h) ** 2
        + (z[:, None] ** 2 - 1.0) ** 2 / (4.0 * spec.lam)
    )
    node_first = 0.5 * spec.lam * (z / spec.h) ** 2
    node_last = 0.5 * spec.lam * (z / spec.h) ** 2 + (z**2 - 1.0) ** 2 / (4.0 * spec.lam)
    energies = [pair.copy() for _ in range(spec.d - 1)]
    energies[0] += node_first[:, None]
    energies[-1] += node_last[None, :]
    return [spec.beta * e for e in energies]


def gl_chain_factors(spec: GinzburgLandauSpec, n: int) -> ChainFactors:
    """Discretize on n uniform grid points and split the energy into
    pairwise window factors."""
    energies = gl_window_energies(spec, gl_grid(spec, n))
    return ChainFactors(
        extents=(n,) * spec.d,
        order=1,
        log_factors=tuple(-e for e in energies),
    )


def gl_discretize(spec: GinzburgLandauSpec, n: int) -> MarkovSpec:
    """Normalized order-1 chain on the n-point grid."""
    return chain_factors_to_markov(gl_chain_factors(spec, n))


# ---------------------------------------------------------------------------
# Ising


@dataclass(frozen=True)
class IsingSpec:
    """Order-2 Ising variant: couplings J_ij = -(1+|i-j|)^{-1} for
    |i-j| <= 2, zero beyond, over a finite spin alphabet."""

    d: int
    beta: float
    alphabet: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.d < 3:
            raise ValueError("the order-2 chain structure needs d >= 3")
        object.__setattr__(self, "alphabet", tuple(float(v) for v in self.alphabet))


def ising_coupling(i: int, j: int) -> float:
    """J_ij for 1-based site indices."""
    if abs(i - j) <= 2:
        return -1.0 / (1.0 + abs(i - j))
    return 0.0


def ising_energy(spec: IsingSpec, x) -> np.ndarray:
    """Double sum over all site pairs (diagonal included), vectorized
    over leading axes of the spin-value array x."""
    x = np.asarray(x, dtype=np.float64)
    e = -np.sum(x**2, axis=-1)  # J_ii = -1
    e += 2.0 * (-0.5) * np.sum(x[..., :-1] * x[..., 1:], axis=-1)
    e += 2.0 * (-1.0 / 3.0) * np.sum(x[..., :-2] * x[..., 2:], axis=-1)
    return e


def ising_chain_factors(spec: IsingSpec) -> ChainFactors:
    vals = np.array(spec.alphabet)
    n = len(vals)
    d = spec.d
    u = vals[:, None, None]
    v = vals[None, :, None]
    w = vals[None, None, :]
    base = -(u**2) - u * v - (2.0 / 3.0) * u * w
    last_extra = -(v**2) - (w**2) - v * w
    energies = [np.broadcast_to(base, (n, n, n)).copy() for _ in range(d - 2)]
    energies[-1] += np.broadcast_to(last_extra, (n, n, n))
    return ChainFactors(
        extents=(n,) * d,
        order=2,
        log_factors=tuple(-spec.beta * e for e in energies),
    )


def ising_spec_to_markov(spec: IsingSpec) -> MarkovSpec:
    """Normalized order-2 chain whose density matches the Boltzmann
    weights of the coupling matrix."""
    return chain_factors_to_markov(ising_chain_factors(spec))


# ---------------------------------------------------------------------------
# exact tensor-train construction and window marginals


def markov_to_tt(spec: MarkovSpec, cap: int = DEFAULT_DENSE_CAP) -> TensorTrain:
    """Exact tensor train of the chain density.

    Bond k carries the joint state of the window (x_{k+1}, ...,
    x_{(k+order) and d}), so bond ranks never exceed the product of the
    window extents regardless of d.
    """
    d, m = spec.d, spec.order
    extents = spec.extents

    def bond_window(k):
        return list(range(k + 1, min(k + m, d) + 1))

    def bond_shape(k):
        return tuple(extents[v - 1] for v in bond_window(k))

    for k in range(1, d):
        if np.prod([float(x) for x in bond_shape(k)]) > cap:
            raise CapExceededError(f"bond {k} window exceeds the {cap}-entry cap")
    if d == 1:
        return TensorTrain([spec.initial.reshape(1, extents[0], 1)])

    cores = []
    # First core: joint over x_1 and the first bond window.
    head = spec.initial
    if d > m:
        head = head[..., None] * spec.kernels[0]  # joint over x_{1:m+1}
    r1 = int(np.prod(bond_shape(1)))
    cores.append(head.reshape(1, extents[0], r1))
    for k in range(2, d):
        prev_win, prev_shape = bond_window(k - 1), bond_shape(k - 1)
        new_win, new_shape = bond_window(k), bond_shape(k)
        r_prev, r_new = int(np.prod(prev_shape)), int(np.prod(new_shape))
        core = np.zeros((r_prev, extents[k - 1], r_new))
        grows = k + m <= d
        ker = spec.kernels[k - 1] if grows else None
        for alpha in range(r_prev):
            state = np.unravel_index(alpha, prev_shape)
            x_k = state[0]  # bond window starts at variable k
            rest = state[1:]
            if grows:
                probs = ker[(x_k,) + rest] if m > 1 else ker[x_k]
                for x_new in range(extents[new_win[-1] - 1]):
                    beta = int(np.ravel_multi_index(rest + (x_new,), new_shape))
                    core[alpha, x_k, beta] = probs[x_new]
            else:
                beta = int(np.ravel_multi_index(rest, new_shape)) if rest else 0
                core[alpha, x_k, beta] = 1.0
        cores.append(core)
    last = np.zeros((extents[d - 1], extents[d - 1], 1))
    for x in range(extents[d - 1]):
        last[x, x, 0] = 1.0
    cores.append(last)
    return TensorTrain(cores)


def window_marginal(spec: MarkovSpec, lo: int, hi: int,
                    cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Exact joint of a contiguous window, via forward propagation.

    Slides the order-m window distribution up to the target, then grows
    it without marginalizing; cost stays polynomial in the window size,
    so deep chains are handled exactly.
    """
    d, m = spec.d, spec.order
    if not 1 <= lo <= hi <= d:
        raise ValueError(f"window [{lo}..{hi}] outside 1..{d}")
    if np.prod([float(spec.extents[v - 1]) for v in range(lo, hi + 1)]) > cap:
        raise CapExceededError("window exceeds the entry cap")
    if d <= m:
        joint = spec.initial
        base, top = 1, d
    else:
        joint = spec.initial  # over [1, m]
        j = m
        start = min(lo, d - m + 1)
        while j - m + 1 < start:
            ker = spec.kernels[j - m]
            joint = np.sum(joint[..., None] * ker, axis=0)
            j += 1
        base = j - m + 1
        while j < hi:
            ker = spec.kernels[j - m]
            expand = (None,) * (joint.ndim - m)
            joint = joint[..., None] * ker[expand]
            j += 1
        top = j
    keep = range(base, top + 1)
    drop = tuple(i for i, v in enumerate(keep) if not lo <= v <= hi)
    return joint.sum(axis=drop) if drop else joint


# ---------------------------------------------------------------------------
# samplers


def _draw_rows(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row from unnormalized cumulative weights."""
    totals = cum_rows[:, -1]
    thresholds = u * totals
    idx = (cum_rows < thresholds[:, None]).sum(axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


def sample_ancestral(spec: MarkovSpec, n_samples: int, seed: int = 0) -> SampleSet:
    """Exact i.i.d. draws by sequential conditional sampling."""
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    rng = np.random.default_rng(seed)
    d, m = spec.d, spec.order
    w = min(m, d)
    x = np.empty((n_samples, d), dtype=np.int64)
    flat = spec.initial.ravel()
    cum = np.cumsum(flat)
    first = _draw_rows(np.broadcast_to(cum, (n_samples, flat.size)), rng.random(n_samples))
    coords = np.unravel_index(first, spec.initial.shape)
    for j in range(w):
        x[:, j] = coords[j]
    for j, ker in enumerate(spec.kernels):
        rows = ker.reshape(-1, ker.shape[-1])
        cum = np.cumsum(rows, axis=1)
        window_shape = ker.shape[:-1]
        state = np.ravel_multi_index(tuple(x[:, j + t] for t in range(m)), window_shape)
        x[:, m + j] = _draw_rows(cum[state], rng.random(n_samples))
    return SampleSet(
        x + 1,
        extents=spec.extents,
        meta={"sampler": "ancestral", "seed": seed},
    )


def sample_gibbs(cf: ChainFactors, n_samples: int, burn_in: int = 1000,
                 thin: int = 10, seed: int = 0, n_chains: int = 1) -> SampleSet:
    """Systematic-scan single-site Gibbs over a chain-factor density.

    Runs `n_chains` independent chains in lockstep and interleaves their
    thinned states until n_samples rows are collected; burn-in and
    thinning are recorded in the sample metadata.
    """
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if n_samples < 1 or n_chains < 1:
        raise ValueError("n_samples and n_chains must be >= 1")
    rng = np.random.default_rng(seed)
    d, m = cf.d, cf.order
    extents = cf.extents
    chains = n_chains
    state = np.empty((chains, d), dtype=np.int64)
    for s in range(d):
        state[:, s] = rng.integers(0, extents[s], size=chains)

    def sweep():
        for s in range(d):
            logw = np.zeros((chains, extents[s]))
            for f in range(max(0, s - m), min(s, d - m - 1) + 1):
                pos = s - f
                fac = np.moveaxis(cf.log_factors[f], pos, -1)
                cols = [f + t for t in range(m + 1) if t != pos]
                logw += fac[tuple(state[:, c] for c in cols)]
            w = np.exp(logw - logw.max(axis=1, keepdims=True))
            state[:, s] = _draw_rows(np.cumsum(w, axis=1), rng.random(chains))

    for _ in range(burn_in):
        sweep()
    out = []
    collected = 0
    while collected < n_samples:
        for _ in range(thin):
            sweep()
        out.append(state.copy())
        collected += chains
    values = np.concatenate(out, axis=0)[:n_samples] + 1
    return SampleSet(
        values,
        extents=extents,
        meta={"sampler": "gibbs", "seed": seed, "burn_in": burn_in,
              "thin": thin, "n_chains": n_chains},
    )


def _reflect(x: np.ndarray, a: float, b: float) -> np.ndarray:
    span = 2.0 * (b - a)
    y = np.mod(x - a, span)
    y = np.where(y > (b - a), span - y, y)
    return a + y


def mh_acceptance_probability(spec: GinzburgLandauSpec, x, y) -> np.ndarray:
    """Acceptance probability of the symmetric random-walk proposal:
    min(1, exp(-(E(y) - E(x)))) with the inverse temperature inside E."""
    return np.minimum(1.0, np.exp(gl_energy(spec, x) - gl_energy(spec, y)))


def sample_mh_continuous(spec: GinzburgLandauSpec, n_samples: int, sigma: float = 0.5,
                         burn_in: int = 1000, thin: int = 10, seed: int = 0,
                         n_chains: int = 1) -> SampleSet:
    """Gaussian random-walk Metropolis-Hastings on [a, b]^d with
    reflecting boundaries (the folded proposal stays symmetric)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if n_samples < 1 or n_chains < 1:
        raise ValueError("n_samples and n_chains must be >= 1")
    rng = np.random.default_rng(seed)
    d = spec.d
    chains = n_chains
    state = rng.uniform(spec.a, spec.b, size=(chains, d))
    energy = gl_energy(spec, state)

    def step():
        nonlocal state, energy
        prop = _reflect(state + sigma * rng.standard_normal((chains, d)), spec.a, spec.b)
        e_new = gl_energy(spec, prop)
        accept = np.log(rng.random(chains)) < energy - e_new
        state = np.where(accept[:, None], prop, state)
        energy = np.where(accept, e_new, energy)

    for _ in range(burn_in):
        step()
    out = []
    collected = 0
    while collected < n_samples:
        for _ in range(thin):
            step()
        out.append(state.copy())
        collected += chains
    values = np.concatenate(out, axis=0)[:n_samples]
    return SampleSet(
        values,
        interval=(spec.a, spec.b),
        meta={"sampler": "mh", "seed": seed, "sigma": sigma,
              "burn_in": burn_in, "thin": thin, "n_chains": n_chains},
    )


def sample_from_tt(tt: TensorTrain, n_samples: int, seed: int = 0) -> SampleSet:
    """Conditional sampling from a fitted tensor train.

    Draws x_1 from its marginal and each later coordinate from the
    conditional given the prefix, using precomputed right partial sums.
    Estimation artifacts can make conditional weights slightly negative;
    they are clipped to zero and renormalized, and any site whose whole
    conditional is nonpositive falls back to uniform (counted in the
    sample metadata).
    """
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    rng = np.random.default_rng(seed)
    d = tt.ndim
    suffix = [None] * (d + 1)
    suffix[d] = np.ones(1)
    for k in range(d, 0, -1):
        suffix[k - 1] = tt.cores[k - 1].sum(axis=1) @ suffix[k]
    if suffix[0][0] <= 0.0:
        raise DegenerateError("tensor train has nonpositive total mass")
    left = np.ones((n_samples, 1))
    x = np.empty((n_samples, d), dtype=np.int64)
    fallbacks = 0
    clipped_mass = 0.0
    total_mass = 0.0
    for k in range(1, d + 1):
        core = tt.cores[k - 1]
        weights = np.einsum("nr,rxs,s->nx", left, core, suffix[k])
        neg = np.minimum(weights, 0.0)
        clipped_mass += float(-neg.sum())
        total_mass += float(np.abs(weights).sum())
        weights = np.maximum(weights, 0.0)
        dead = weights.sum(axis=1) <= 0.0
        if dead.any():
            fallbacks += int(dead.sum())
            weights[dead] = 1.0
        x[:, k - 1] = _draw_rows(np.cumsum(weights, axis=1), rng.random(n_samples))
        if k < d:
            new_left = np.empty((n_samples, core.shape[2]))
            for v in range(core.shape[1]):
                mask = x[:, k - 1] == v
                if mask.any():
                    new_left[mask] = left[mask] @ core[:, v, :]
            left = new_left
    return SampleSet(
        x + 1,
        extents=tt.extents,
        meta={
            "sampler": "tt-conditional",
            "seed": seed,
            "uniform_fallbacks": fallbacks,
            "clipped_fraction": clipped_mass / total_mass if total_mass else 0.0,
        },
    )


# ---------------------------------------------------------------------------
# JSON spec files


def markov_spec_to_json(spec: MarkovSpec) -> str:
    return json.dumps(
        {
            "order": spec.order,
            "extents": list(spec.extents),
            "initial": spec.initial.tolist(),
            "kernels": [k.tolist() for k in spec.kernels],
        }
    )


def markov_spec_from_json(text: str) -> MarkovSpec:
    doc = json.loads(text)
    return MarkovSpec(
        order=int(doc["order"]),
        extents=tuple(int(n) for n in doc["extents"]),
        initial=np.array(doc["initial"], dtype=np.float64),
        kernels=tuple(np.array(k, dtype=np.float64) for k in doc["kernels"]),
    )
