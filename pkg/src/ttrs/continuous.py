"""Continuous-variable fitting over an orthonormal basis.

The chain pipeline carries over to densities on [a, b]^d by expanding
everything in a fixed orthonormal basis whose first function is
constant: the sketched moments become small coefficient tensors
estimated directly from samples, trimming and the per-core solves run
in coefficient space, and the fitted coefficient cores induce function
cores through the basis.

All L2 quantities are Gauss-Legendre transfer-matrix computations along
the chain, never full-grid integrals.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import engine
from .empirical import SampleSet
from .errors import DegenerateError, RankError, SampleFormatError, ShapeError
from .markov import GinzburgLandauSpec, gl_window_energies
from .tensor_core import TensorTrain, load_tt, save_tt, tt_inner

_ORTHO_TOL = 1e-10
_CTT_MAGIC = b"TTRSC1"

# Block size for sample-chunked coefficient accumulation.
_BLOCK = 20_000


def gauss_legendre(a: float, b: float, q: int):
    """Nodes and weights on [a, b]."""
    xi, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (b - a) * xi + 0.5 * (a + b), 0.5 * (b - a) * w


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal functions phi_1..phi_M on [a, b] with phi_1 constant.

    The default (and currently only) family is the Fourier basis:
    phi_1 = 1/sqrt(b-a) followed by normalized cosine/sine pairs of
    increasing frequency. Orthonormality, the constancy of phi_1, and
    the vanishing integrals of phi_2.. are verified by quadrature at
    construction.
    """

    a: float
    b: float
    size: int
    family: str = "fourier"

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("interval must satisfy a < b")
        if self.size < 1:
            raise ValueError("basis size must be >= 1")
        if self.family != "fourier":
            raise ValueError(f"unknown basis family {self.family!r}")
        z, w = gauss_legendre(self.a, self.b, max(50, 4 * self.size))
        vals = self.evaluate(z)
        gram = vals.T @ (w[:, None] * vals)
        if np.max(np.abs(gram - np.eye(self.size))) > _ORTHO_TOL:
            raise DegenerateError("basis fails the quadrature orthonormality check")
        integrals = w @ vals
        if self.size > 1 and np.max(np.abs(integrals[1:])) > _ORTHO_TOL:
            raise DegenerateError("non-constant basis functions must integrate to zero")

    @property
    def constant_value(self) -> float:
        """Value of phi_1."""
        return 1.0 / np.sqrt(self.b - self.a)

    def evaluate(self, x) -> np.ndarray:
        """Evaluate all basis functions; returns shape x.shape + (M,)."""
        x = np.asarray(x, dtype=np.float64)
        length = self.b - self.a
        t = 2.0 * np.pi * (x - self.a) / length
        out = np.empty(x.shape + (self.size,))
        out[..., 0] = self.constant_value
        amp = np.sqrt(2.0 / length)
        for j in range(2, self.size + 1):
            freq = j // 2
            if j % 2 == 0:
                out[..., j - 1] = amp * np.cos(freq * t)
            else:
                out[..., j - 1] = amp * np.sin(freq * t)
        return out


def fourier_basis(a: float, b: float, size: int) -> BasisSet:
    return BasisSet(a=a, b=b, size=size)


@dataclass
class CoeffTensors:
    """Coefficient-space sketched moments: nu_first (M x M), one
    M x M x M tensor per interior position (with the constant-function
    prefactors already applied), and the final M x M block."""

    basis: BasisSet
    nu_first: np.ndarray
    nu_mid: list
    b_last: np.ndarray

    @property
    def d(self) -> int:
        return len(self.nu_mid) + 2


@dataclass
class ContinuousTT:
    """Coefficient cores plus the basis that turns them into functions."""

    coeff: TensorTrain
    basis: BasisSet

    @property
    def d(self) -> int:
        return self.coeff.ndim

    def evaluate(self, points) -> np.ndarray:
        """Density values at an (N, d) array of points."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[None, :]
        if points.shape[1] != self.d:
            raise ShapeError(f"points have {points.shape[1]} columns, expected {self.d}")
        left = np.ones((points.shape[0], 1))
        for k, core in enumerate(self.coeff.cores):
            vals = self.basis.evaluate(points[:, k])
            slices = np.einsum("rms,nm->nrs", core, vals)
            left = np.einsum("nr,nrs->ns", left, slices)
        return left[:, 0]


def _kahan_add(acc, comp, term):
    y = term - comp
    t = acc + y
    comp[...] = (t - acc) - y
    acc[...] = t


def estimate_coeff_marginals(s: SampleSet, basis: BasisSet) -> CoeffTensors:
    """Accumulate the coefficient moments from continuous samples.

    Each block of samples contributes rank-1 outer products of basis
    evaluations at adjacent coordinates; blocks are combined with
    compensated summation so the N = 1e6 runs do not lose digits.
    """
    if s.is_discrete:
        raise ShapeError("coefficient moments need continuous samples")
    if s.interval != (basis.a, basis.b):
        raise SampleFormatError(
            f"sample interval {s.interval} does not match basis [{basis.a}, {basis.b}]"
        )
    d = s.dims
    if d < 2:
        raise ShapeError("need at least two variables")
    m = basis.size
    c = basis.constant_value
    n = s.n_samples
    nu_first = np.zeros((m, m))
    nu_mid = [np.zeros((m, m, m)) for _ in range(d - 2)]
    b_last = np.zeros((m, m))
    comp_first = np.zeros_like(nu_first)
    comp_mid = [np.zeros_like(t) for t in nu_mid]
    comp_last = np.zeros_like(b_last)
    for start in range(0, n, _BLOCK):
        block = s.values[start : start + _BLOCK]
        vals = [basis.evaluate(block[:, j]) for j in range(d)]
        _kahan_add(nu_first, comp_first, vals[0].T @ vals[1])
        for k in range(2, d):
            pair = (vals[k - 2][:, :, None] * vals[k - 1][:, None, :]).reshape(
                block.shape[0], m * m
            )
            _kahan_add(nu_mid[k - 2], comp_mid[k - 2], (pair.T @ vals[k]).reshape(m, m, m))
        _kahan_add(b_last, comp_last, vals[d - 2].T @ vals[d - 1])
    nu_first /= n
    b_last *= c ** (d - 2) / n
    for k in range(2, d):
        nu_mid[k - 2] *= c ** (k - 2) / n
    return CoeffTensors(basis=basis, nu_first=nu_first, nu_mid=nu_mid, b_last=b_last)


def fit_from_coeff_marginals(coeffs: CoeffTensors, ranks):
    """Trim the coefficient moments and solve the coefficient-space
    per-core equations; returns the fitted coefficient cores."""
    d = coeffs.d
    m = coeffs.basis.size
    if np.isscalar(ranks):
        ranks = [int(ranks)] * (d - 1)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != d - 1:
        raise ShapeError(f"{len(ranks)} ranks for d = {d}")
    if any(r > m or r < 1 for r in ranks):
        raise RankError(f"ranks {ranks} must lie in 1..M = {m}")
    phis = [coeffs.nu_first, *coeffs.nu_mid, coeffs.b_last]
    trimmed = engine.trim(phis, ranks)
    mats = [trimmed.bs[0]]  # A_1 equals the first trimmed factor
    for b in trimmed.bs[1:-1]:
        mats.append(b[0, :, :])  # constant-function row of the factor
    systems = engine.make_systems(mats)
    tt, report = engine.solve_cores(systems, trimmed)
    return ContinuousTT(coeff=tt, basis=coeffs.basis), report


def tt_rs_continuous_markov(s: SampleSet, basis: BasisSet, ranks):
    """Fit a continuous chain density from samples: estimate coefficient
    moments, then solve in coefficient space."""
    coeffs = estimate_coeff_marginals(s, basis)
    return fit_from_coeff_marginals(coeffs, ranks)


# ---------------------------------------------------------------------------
# exact coefficient tensors and L2 error decomposition


def _chain_log_quadrature(energies, w, power: float = 1.0) -> float:
    """log of the chain integral of exp(-power * sum of energies) under
    the product quadrature rule."""
    logv = np.log(w)
    for e in energies[:-1]:
        logv = logsumexp(logv[:, None] - power * e, axis=0) + np.log(w)
    return float(logsumexp(logsumexp(logv[:, None] - power * energies[-1], axis=0) + np.log(w)))


def markov_to_coeff_tt(spec: GinzburgLandauSpec, basis: BasisSet, quad_nodes: int = 50) -> TensorTrain:
    """Exact (up to quadrature) coefficient tensor of the normalized
    chain density, built as a tensor train over the basis indices.

    The bond index enumerates quadrature nodes, so the chain integrals
    defining the coefficients are never formed over a full grid; cores
    are rebalanced in the log domain before the normalization is spread
    across them.
    """
    if quad_nodes < 50:
        raise ValueError("use at least 50 quadrature nodes")
    z, w = gauss_legendre(spec.a, spec.b, quad_nodes)
    energies = gl_window_energies(spec, z)
    shifts = [e.min() for e in energies]
    factors = [np.exp(-(e - s)) for e, s in zip(energies, shifts)]
    vertex = w[:, None] * basis.evaluate(z)  # (Q, M)
    d = spec.d
    cores = []
    cores.append((vertex.T @ factors[0]).reshape(1, basis.size, quad_nodes))
    for k in range(2, d):
        cores.append(np.einsum("qm,qp->qmp", vertex, factors[k - 1]))
    cores.append(vertex[:, :, None])
    # log of the shifted normalizing constant over the same quadrature
    logv = np.log(w)
    for f in factors:
        logv = logsumexp(logv[:, None] + np.log(f), axis=0) + np.log(w)
    log_z_shifted = float(logsumexp(logv))
    # rebalance core magnitudes, then spread the normalization evenly
    log_total = -log_z_shifted
    rescaled = []
    for core in cores:
        scale = np.max(np.abs(core))
        if scale == 0.0:
            raise DegenerateError("zero core while building the coefficient train")
        rescaled.append(core / scale)
        log_total += np.log(scale)
    factor = np.exp(log_total / d)
    return TensorTrain([c * factor for c in rescaled])


def gl_log_l2_norm_sq(spec: GinzburgLandauSpec, quad_nodes: int = 50) -> float:
    """log of the squared L2 norm of the normalized density."""
    z, w = gauss_legendre(spec.a, spec.b, quad_nodes)
    energies = gl_window_energies(spec, z)
    shifts = [e.min() for e in energies]
    shifted = [e - s for e, s in zip(energies, shifts)]
    log_i2 = _chain_log_quadrature(shifted, w, power=2.0)
    log_z = _chain_log_quadrature(shifted, w, power=1.0)
    return log_i2 - 2.0 * log_z


def l2_error_decomposition(spec: GinzburgLandauSpec, basis: BasisSet,
                           fit: ContinuousTT | None, quad_nodes: int = 50):
    """Split the relative L2 error into approximation and estimation
    parts using the basis orthogonality.

    Returns (err_a, err_e, err_t); err_e is 0 when no fit is supplied.
    """
    if quad_nodes < 50:
        raise ValueError("use at least 50 quadrature nodes")
    log_p2 = gl_log_l2_norm_sq(spec, quad_nodes)
    nu_tt = markov_to_coeff_tt(spec, basis, quad_nodes)
    pa2 = tt_inner(nu_tt, nu_tt)
    if pa2 <= 0.0:
        raise DegenerateError("coefficient tensor has nonpositive norm")
    ratio = np.exp(np.log(pa2) - log_p2)
    if ratio > 1.0 + 1e-10:
        raise DegenerateError(
            f"projection norm exceeds the density norm (ratio {ratio:.3e}); "
            "quadrature inconsistent"
        )
    err_a = float(np.sqrt(max(1.0 - ratio, 0.0)))
    err_e = 0.0
    if fit is not None:
        if fit.coeff.extents != nu_tt.extents:
            raise ShapeError("fitted coefficient cores do not match the basis size")
        diff = pa2 - 2.0 * tt_inner(nu_tt, fit.coeff) + tt_inner(fit.coeff, fit.coeff)
        err_e = float(np.sqrt(max(diff, 0.0) * np.exp(-log_p2)))
    err_t = float(np.hypot(err_a, err_e))
    return err_a, err_e, err_t


# ---------------------------------------------------------------------------
# serialization


def save_continuous_tt(ctt: ContinuousTT, path) -> None:
    """Composite file: magic, length-prefixed basis descriptor JSON,
    then the coefficient train in the standard binary format."""
    desc = json.dumps(
        {"family": ctt.basis.family, "M": ctt.basis.size, "a": ctt.basis.a, "b": ctt.basis.b}
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_CTT_MAGIC)
        fh.write(struct.pack("<Q", len(desc)))
        fh.write(desc)
        save_tt(ctt.coeff, fh)


def load_continuous_tt(path) -> ContinuousTT:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CTT_MAGIC))
        if magic != _CTT_MAGIC:
            raise SampleFormatError(f"{path}: bad magic {magic!r}")
        (ln,) = struct.unpack("<Q", fh.read(8))
        desc = json.loads(fh.read(ln).decode())
        coeff = load_tt(fh)
    basis = BasisSet(a=desc["a"], b=desc["b"], size=desc["M"], family=desc["family"])
    return ContinuousTT(coeff=coeff, basis=basis)
