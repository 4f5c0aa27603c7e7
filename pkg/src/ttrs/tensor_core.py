"""Dense tensors, tensor trains, unfoldings, contractions, and norms.

Dense tensors are plain numpy arrays in row-major (C) order, so the last
index varies fastest; every unfolding and serialization in the package
refers to that linearization. A tensor train stores one 3-way core per
variable with phantom boundary ranks r_0 = r_d = 1, so all pipeline code
handles a single shape family (r_{k-1}, n_k, r_k).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CapExceededError, DegenerateError, SampleFormatError, ShapeError

# Entry-count guard for dense materializations; keeps brute-force oracles
# safe by construction.
DEFAULT_DENSE_CAP = 100_000_000

_TT_MAGIC = b"TTRS1"


class TensorTrain:
    """Ordered chain of 3-way cores with matching bond ranks.

    Parameters
    ----------
    cores : sequence of ndarray
        Core k has shape (r_{k-1}, n_k, r_k); the first and last bond
        ranks must equal 1.
    """

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=np.float64) for c in cores]
        if not cores:
            raise ShapeError("a tensor train needs at least one core")
        for i, c in enumerate(cores):
            if c.ndim != 3:
                raise ShapeError(f"core {i} has {c.ndim} axes, expected 3")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary ranks must equal 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[2] != cores[i + 1].shape[0]:
                raise ShapeError(
                    f"bond mismatch between cores {i} and {i + 1}: "
                    f"{cores[i].shape[2]} vs {cores[i + 1].shape[0]}"
                )
        self.cores = cores

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Bond ranks (r_0, ..., r_d) including the phantom boundaries."""
        return (1,) + tuple(c.shape[2] for c in self.cores)

    def scale(self, factor: float) -> "TensorTrain":
        """Return a copy whose contraction is `factor` times this one."""
        scaled = [c.copy() for c in self.cores]
        scaled[0] = scaled[0] * factor
        return TensorTrain(scaled)

    def __repr__(self):
        return f"TensorTrain(extents={self.extents}, ranks={self.ranks})"


def tt_eval(tt: TensorTrain, index) -> float:
    """Evaluate a tensor train at one multi-index of 1-based coordinates.

    Runs the chained product of core slices in O(d r^2) time.
    """
    if len(index) != tt.ndim:
        raise ShapeError(f"index has {len(index)} coordinates, expected {tt.ndim}")
    vec = np.ones((1,))
    for k, (core, idx) in enumerate(zip(tt.cores, index)):
        n_k = core.shape[1]
        if not 1 <= idx <= n_k:
            raise IndexError(
                f"coordinate {idx} out of range 1..{n_k} at position {k + 1}"
            )
        vec = vec @ core[:, idx - 1, :]
    return float(vec[0])


def tt_contract_full(tt: TensorTrain, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Materialize the tensor train as a dense array.

    Guarded by an entry-count cap (default 1e8) so test-scale oracles
    cannot blow up memory.
    """
    total = int(np.prod([float(n) for n in tt.extents]))
    if np.prod([float(n) for n in tt.extents]) > cap:
        raise CapExceededError(f"dense tensor would hold {total} entries, cap is {cap}")
    out = tt.cores[0][0]  # (n_1, r_1)
    for core in tt.cores[1:]:
        r = core.shape[0]
        out = out.reshape(-1, r) @ core.reshape(r, -1)
    return out.reshape(tt.extents)


def tt_inner(a: TensorTrain, b: TensorTrain) -> float:
    """Inner product sum_x a(x) b(x) via left-to-right transfer contraction."""
    if a.extents != b.extents:
        raise ShapeError(f"mode extents differ: {a.extents} vs {b.extents}")
    env = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        # env (ra, rb) -> contract with a-core then b-core over (bond, mode).
        tmp = np.tensordot(env, ca, axes=(0, 0))  # (rb, n, ra')
        env = np.tensordot(tmp, cb, axes=([0, 1], [0, 1]))  # (ra', rb')
    return float(env[0, 0])


def tt_rel_l2_error(p: TensorTrain, q: TensorTrain) -> float:
    """Relative l2 error ||p - q||_2 / ||p||_2 without materialization."""
    pp = tt_inner(p, p)
    if pp <= 0.0:
        raise DegenerateError("reference tensor train has zero norm")
    diff = pp - 2.0 * tt_inner(p, q) + tt_inner(q, q)
    return float(np.sqrt(max(diff, 0.0) / pp))


def unfold(t: np.ndarray, k: int) -> np.ndarray:
    """k-th unfolding matrix: rows group the first k variables.

    Entry ((x_1..x_k), (x_{k+1}..x_d)) equals t[x_1, ..., x_d]; the
    reshape is a view of the row-major data, so folding back with
    :func:`fold` is an exact bijection of entries.
    """
    t = np.asarray(t)
    if not 1 <= k <= t.ndim - 1:
        raise ValueError(f"split index {k} outside 1..{t.ndim - 1}")
    rows = int(np.prod(t.shape[:k]))
    return t.reshape(rows, -1)


def fold(matrix: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for the given original shape."""
    return np.asarray(matrix).reshape(tuple(shape))


def triple_norm(core: np.ndarray) -> float:
    """Max over the middle index of the spectral norm of core slices.

    Boundary cores in the phantom-rank representation reduce to the max
    Euclidean norm of their rows/columns, which is the natural matrix
    norm for them.
    """
    core = np.asarray(core, dtype=np.float64)
    if core.ndim != 3:
        raise ShapeError(f"expected a 3-way core, got {core.ndim} axes")
    slices = core.transpose(1, 0, 2)  # (n, r_prev, r_next)
    svals = np.linalg.svd(slices, compute_uv=False)
    return float(svals.max(initial=0.0))


def save_tt(tt: TensorTrain, path_or_file) -> None:
    """Write the binary format: magic, d, ranks, extents (u64 LE), then
    each core's entries as little-endian f64 in row-major order."""
    fh = path_or_file if hasattr(path_or_file, "write") else open(path_or_file, "wb")
    try:
        fh.write(_TT_MAGIC)
        d = tt.ndim
        fh.write(struct.pack("<Q", d))
        fh.write(struct.pack(f"<{d + 1}Q", *tt.ranks))
        fh.write(struct.pack(f"<{d}Q", *tt.extents))
        for core in tt.cores:
            fh.write(np.ascontiguousarray(core, dtype="<f8").tobytes())
    finally:
        if fh is not path_or_file:
            fh.close()


def load_tt(path_or_file) -> TensorTrain:
    fh = path_or_file if hasattr(path_or_file, "read") else open(path_or_file, "rb")
    try:
        magic = fh.read(len(_TT_MAGIC))
        if magic != _TT_MAGIC:
            raise SampleFormatError(f"bad magic {magic!r}, expected {_TT_MAGIC!r}")
        (d,) = struct.unpack("<Q", fh.read(8))
        ranks = struct.unpack(f"<{d + 1}Q", fh.read(8 * (d + 1)))
        extents = struct.unpack(f"<{d}Q", fh.read(8 * d))
        cores = []
        for k in range(d):
            shape = (ranks[k], extents[k], ranks[k + 1])
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
            cores.append(data.reshape(shape).astype(np.float64))
    finally:
        if fh is not path_or_file:
            fh.close()
    return TensorTrain(cores)


def tt_to_json(tt: TensorTrain) -> str:
    """JSON mirror of the binary format, for debugging."""
    payload = {
        "format": _TT_MAGIC.decode(),
        "d": tt.ndim,
        "ranks": list(tt.ranks),
        "extents": list(tt.extents),
        "cores": [c.ravel().tolist() for c in tt.cores],
    }
    return json.dumps(payload)


def tt_from_json(text: str) -> TensorTrain:
    payload = json.loads(text)
    if payload.get("format") != _TT_MAGIC.decode():
        raise ShapeError(f"unexpected format tag {payload.get('format')!r}")
    ranks = payload["ranks"]
    extents = payload["extents"]
    cores = []
    for k in range(payload["d"]):
        shape = (ranks[k], extents[k], ranks[k + 1])
        cores.append(np.array(payload["cores"][k], dtype=np.float64).reshape(shape))
    return TensorTrain(cores)
