"""Sample ingestion and N-sparse empirical-density operations.

The empirical density is never materialized: marginals come from direct
counting over the sample table, and sketched moments are accumulated
sample by sample, which keeps everything O(N) per variable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, SampleFormatError, ShapeError
from .tensor_core import DEFAULT_DENSE_CAP

_SAMP_MAGIC = b"TTSAMP1"


class SampleSet:
    """N x d table of observations.

    Discrete mode stores integer codes 1..n_k per column together with
    the extents; continuous mode stores reals confined to an interval
    [a, b]. Instances are immutable after construction.
    """

    def __init__(self, values, extents=None, interval=None, meta=None):
        values = np.asarray(values)
        if values.ndim != 2:
            raise ShapeError("sample table must be two-dimensional (N x d)")
        if values.shape[0] < 1:
            raise ShapeError("need at least one sample")
        if (extents is None) == (interval is None):
            raise ShapeError("give exactly one of extents (discrete) or interval")
        if extents is not None:
            extents = tuple(int(n) for n in extents)
            if len(extents) != values.shape[1]:
                raise ShapeError(
                    f"{len(extents)} extents for {values.shape[1]} columns"
                )
            if any(n < 1 for n in extents):
                raise ShapeError("extents must be >= 1")
            values = values.astype(np.int64)
            for j, n_j in enumerate(extents):
                col = values[:, j]
                bad = np.nonzero((col < 1) | (col > n_j))[0]
                if bad.size:
                    i = int(bad[0])
                    raise SampleFormatError(
                        f"code {col[i]} out of range 1..{n_j} at row {i}, column {j + 1}"
                    )
        else:
            a, b = float(interval[0]), float(interval[1])
            if not a < b:
                raise ShapeError("interval must satisfy a < b")
            interval = (a, b)
            values = values.astype(np.float64)
            if np.any(values < a) or np.any(values > b):
                i, j = np.argwhere((values < a) | (values > b))[0]
                raise SampleFormatError(
                    f"value {values[i, j]} outside [{a}, {b}] at row {i}, column {j + 1}"
                )
        self.values = values
        self.values.setflags(write=False)
        self.extents = extents
        self.interval = interval
        self.meta = dict(meta) if meta else {}

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    @property
    def is_discrete(self) -> bool:
        return self.extents is not None

    def __repr__(self):
        kind = "discrete" if self.is_discrete else "continuous"
        return f"SampleSet(N={self.n_samples}, d={self.dims}, {kind})"


def concat_samples(a: SampleSet, b: SampleSet) -> SampleSet:
    """Stack two compatible sample sets (same mode and coding)."""
    if a.is_discrete != b.is_discrete:
        raise ShapeError("cannot concatenate discrete with continuous samples")
    if a.is_discrete and a.extents != b.extents:
        raise ShapeError("extents differ")
    if not a.is_discrete and a.interval != b.interval:
        raise ShapeError("intervals differ")
    values = np.vstack([a.values, b.values])
    return SampleSet(values, extents=a.extents, interval=a.interval)


@dataclass(frozen=True)
class MarginalTensor:
    """Counts over a contiguous variable window, 1-based inclusive."""

    window: tuple[int, int]
    counts: np.ndarray
    n_samples: int

    @property
    def frequency(self) -> np.ndarray:
        return self.counts / float(self.n_samples)


def marginal(s: SampleSet, window, cap: int = DEFAULT_DENSE_CAP) -> MarginalTensor:
    """Frequency tensor of a contiguous window by direct counting.

    Runs in O(N * window size); counts are kept as 64-bit integers and
    normalized once, so merging partial counts stays exact.
    """
    if not s.is_discrete:
        raise ShapeError("marginals require discrete samples")
    lo, hi = int(window[0]), int(window[1])
    if not (1 <= lo <= hi <= s.dims):
        raise ValueError(f"window [{lo}..{hi}] outside 1..{s.dims}")
    shape = s.extents[lo - 1 : hi]
    if np.prod([float(n) for n in shape]) > cap:
        raise CapExceededError(f"window {shape} exceeds the {cap}-entry cap")
    counts = np.zeros(shape, dtype=np.int64)
    idx = tuple((s.values[:, j] - 1) for j in range(lo - 1, hi))
    np.add.at(counts, idx, 1)
    return MarginalTensor((lo, hi), counts, s.n_samples)


def sketched_moment(s: SampleSet, left, k: int, right) -> np.ndarray:
    """Sketched moment of the empirical density at position k.

    `left` holds per-sample evaluations of the composed left sketch
    (an N x m array, or None for the phantom all-ones sketch); `right`
    holds per-sample right-sketch evaluations (N x l, or None). The
    result has shape (m, n_k, l) and equals the contraction of the
    empirical density with both sketches, accumulated sample by sample.
    """
    if not s.is_discrete:
        raise ShapeError("sketched moments require discrete samples")
    n = s.n_samples
    if left is None:
        left = np.ones((n, 1))
    if right is None:
        right = np.ones((n, 1))
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape[0] != n or right.shape[0] != n:
        raise ShapeError("per-sample sketch tables must have N rows")
    n_k = s.extents[k - 1]
    codes = s.values[:, k - 1]
    out = np.empty((left.shape[1], n_k, right.shape[1]))
    for v in range(1, n_k + 1):
        mask = codes == v
        out[:, v - 1, :] = left[mask].T @ right[mask]
    out /= n
    return out


def save_samples(s: SampleSet, path) -> None:
    """Binary sample file: magic, mode, N, d, coding block, then the
    row-major table (u16 codes for discrete, LE f64 for continuous)."""
    with open(path, "wb") as fh:
        fh.write(_SAMP_MAGIC)
        mode = 0 if s.is_discrete else 1
        fh.write(struct.pack("<QQQ", mode, s.n_samples, s.dims))
        if s.is_discrete:
            if max(s.extents) > np.iinfo(np.uint16).max:
                raise ShapeError("binary sample format carries 16-bit codes only")
            fh.write(struct.pack(f"<{s.dims}Q", *s.extents))
            fh.write(np.ascontiguousarray(s.values, dtype="<u2").tobytes())
        else:
            fh.write(struct.pack("<dd", *s.interval))
            fh.write(np.ascontiguousarray(s.values, dtype="<f8").tobytes())


def load_samples(path, schema=None) -> SampleSet:
    """Load a sample file; format chosen by extension (.csv vs binary).

    CSV needs a `schema` dict ({"extents": [...]} or {"interval": [a, b]})
    because the text format does not carry the coding.
    """
    path = str(path)
    if path.endswith(".csv"):
        return _load_csv(path, schema)
    return _load_binary(path)


def _load_binary(path) -> SampleSet:
    with open(path, "rb") as fh:
        magic = fh.read(len(_SAMP_MAGIC))
        if magic != _SAMP_MAGIC:
            raise SampleFormatError(
                f"{path}: bad magic {magic!r}, expected {_SAMP_MAGIC!r}"
            )
        mode, n, d = struct.unpack("<QQQ", fh.read(24))
        if mode == 0:
            extents = struct.unpack(f"<{d}Q", fh.read(8 * d))
            data = np.frombuffer(fh.read(2 * n * d), dtype="<u2", count=n * d)
            return SampleSet(data.reshape(n, d).astype(np.int64), extents=extents)
        a, b = struct.unpack("<dd", fh.read(16))
        data = np.frombuffer(fh.read(8 * n * d), dtype="<f8", count=n * d)
        return SampleSet(data.reshape(n, d).astype(np.float64), interval=(a, b))


def _load_csv(path, schema) -> SampleSet:
    if not schema or ("extents" not in schema and "interval" not in schema):
        raise SampleFormatError("CSV loading needs a schema with extents or interval")
    discrete = "extents" in schema
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.lower().lstrip().startswith("x1"):
            raise SampleFormatError(f"{path}:1: expected header row x1,...,xd")
        d = len(header.strip().split(","))
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != d:
                raise SampleFormatError(
                    f"{path}:{lineno}: {len(parts)} fields, expected {d}"
                )
            try:
                if discrete:
                    rows.append([int(p) for p in parts])
                else:
                    rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise SampleFormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise SampleFormatError(f"{path}: no sample rows")
    values = np.array(rows)
    try:
        if discrete:
            return SampleSet(values, extents=schema["extents"])
        return SampleSet(values, interval=schema["interval"])
    except SampleFormatError as exc:
        raise SampleFormatError(f"{path}: {exc}") from exc


def save_samples_csv(s: SampleSet, path) -> None:
    header = ",".join(f"x{j + 1}" for j in range(s.dims))
    if s.is_discrete:
        fmt = "%d"
    else:
        fmt = "%.17g"
    np.savetxt(path, s.values, fmt=fmt, delimiter=",", header=header, comments="")
