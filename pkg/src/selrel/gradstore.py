"""Gradient-matrix container, normalization, and random projection.

Per-example loss gradients are kept as rows of a matrix alongside example ids
and a partition of the columns into named layer segments. Gradients are
compressed with a per-layer random sign (Rademacher) projection before any
downstream estimation, selection, or scoring. On disk the values are 32-bit
floats; dot products and norms always accumulate in 64-bit.
"""

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import sign_block, stream_key
from .errors import DegenerateGradientError, FormatError

MAGIC = b"GRDM"
VERSION = 1
_FLAG_NORMALIZED = 1
# Rows of a projection sign matrix are generated in fixed-size chunks so the
# full d x p matrix is never materialized for large widths. The size is a
# constant (not a knob) so the float accumulation order is reproducible.
_SIGN_CHUNK_ROWS = 1024


@dataclass(eq=False)
class GradientMatrix:
    """Per-example gradients: one row per example id.

    layer_segments is a list of (name, width) pairs partitioning the columns;
    widths must sum to the column count. The normalized flag records that all
    rows are unit-L2 (enforced within 1e-6; zero rows are forbidden then).
    """

    ids: list[str]
    rows: np.ndarray
    layer_segments: list[tuple[str, int]]
    normalized: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows)
        if self.rows.ndim != 2:
            raise ValueError(f"rows must be 2-dimensional, got shape {self.rows.shape}")
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != self.rows.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {self.rows.shape[0]} rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        self.layer_segments = [(str(n), int(w)) for n, w in self.layer_segments]
        widths = sum(w for _, w in self.layer_segments)
        if widths != self.dim:
            raise ValueError(
                f"layer segment widths sum to {widths}, expected dim {self.dim}"
            )
        if self.normalized and self.rows.shape[0] > 0:
            norms = np.linalg.norm(self.rows.astype(np.float64), axis=1)
            bad = np.where(np.abs(norms - 1.0) > 1e-6)[0]
            if bad.size:
                i = int(bad[0])
                if norms[i] == 0.0:
                    raise DegenerateGradientError(
                        f"row {self.ids[i]!r} is zero but matrix is flagged normalized"
                    )
                raise ValueError(
                    f"row {self.ids[i]!r} has norm {norms[i]!r}, "
                    "matrix is flagged normalized"
                )
        self._index = {eid: i for i, eid in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    def index_of(self, example_id: str) -> int:
        try:
            return self._index[example_id]
        except KeyError:
            raise KeyError(f"unknown example id {example_id!r}") from None

    def row(self, example_id: str) -> np.ndarray:
        return self.rows[self.index_of(example_id)]

    def subset(self, ids) -> "GradientMatrix":
        """New matrix holding the given ids' rows, in the given order."""
        idx = [self.index_of(i) for i in ids]
        return GradientMatrix(
            ids=[self.ids[i] for i in idx],
            rows=self.rows[idx].copy(),
            layer_segments=list(self.layer_segments),
            normalized=self.normalized,
        )


@dataclass(frozen=True)
class ProjectionSpec:
    """How to project each layer segment: target widths plus the sign seed.

    mode "rademacher" is the real projection; mode "identity" is a testing
    aid that requires per-layer target width equal to the original width and
    leaves the block unchanged.
    """

    total_dim: int
    seed: int
    per_layer_dims: list[int]
    mode: str = "rademacher"

    def __post_init__(self):
        if self.total_dim <= 0:
            raise ValueError("total_dim must be positive")
        if not self.per_layer_dims or any(p <= 0 for p in self.per_layer_dims):
            raise ValueError("per_layer_dims must be non-empty and positive")
        if sum(self.per_layer_dims) > self.total_dim:
            raise ValueError("per_layer_dims exceed total_dim")
        if self.mode not in ("rademacher", "identity"):
            raise ValueError(f"unknown projection mode {self.mode!r}")


@dataclass(eq=False)
class ProbeSet:
    """Gradients to reconstruct when scoring a selection.

    mode "test_only" holds the single test-instance gradient; mode
    "population" holds gradients sampled uniformly from the training matrix
    with the recorded seed.
    """

    mode: str
    probes: np.ndarray
    source_ids: list[str]
    seed: int | None = None

    def __post_init__(self):
        self.probes = np.asarray(self.probes, dtype=np.float64)
        if self.probes.ndim != 2 or self.probes.shape[0] < 1:
            raise ValueError("probes must be a non-empty 2-d array")
        if self.mode not in ("test_only", "population"):
            raise ValueError(f"unknown probe mode {self.mode!r}")
        if self.mode == "test_only" and self.probes.shape[0] != 1:
            raise ValueError("test_only mode requires exactly one probe")
        if len(self.source_ids) != self.probes.shape[0]:
            raise ValueError("source_ids length must match probe count")

    @classmethod
    def from_test_gradient(cls, test_id: str, gradient) -> "ProbeSet":
        g = np.asarray(gradient, dtype=np.float64)
        return cls(mode="test_only", probes=g[None, :], source_ids=[test_id])

    @classmethod
    def sample_population(cls, train: GradientMatrix, count: int, seed: int) -> "ProbeSet":
        if not 1 <= count <= train.n:
            raise ValueError(f"population size {count} not in [1, {train.n}]")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(train.n, size=count, replace=False))
        return cls(
            mode="population",
            probes=train.rows[idx].astype(np.float64),
            source_ids=[train.ids[i] for i in idx],
            seed=seed,
        )


def allocate_projection_dims(layer_dims: list[int], total_dim: int) -> list[int]:
    """Distribute a total projection width over layers proportionally.

    Each layer gets min(d_l, floor(total_dim * d_l / sum(d))), then entries
    are clamped up to 1. If the clamping pushed the sum over budget, the
    largest entries (earliest layer on ties) are decremented until the sum
    fits; entries never drop below 1.
    """
    if not layer_dims:
        raise ValueError("layer_dims must be non-empty")
    if any(d <= 0 for d in layer_dims):
        raise ValueError("layer_dims must be positive")
    if total_dim < len(layer_dims):
        raise ValueError(
            f"total_dim {total_dim} cannot cover {len(layer_dims)} layers"
        )
    total = sum(layer_dims)
    dims = [max(1, min(d, (total_dim * d) // total)) for d in layer_dims]
    while sum(dims) > total_dim:
        candidates = [i for i, p in enumerate(dims) if p > 1]
        j = max(candidates, key=lambda i: (dims[i], -i))
        dims[j] -= 1
    return dims


def projection_signs(seed: int, layer_index: int, width: int, proj_dim: int) -> np.ndarray:
    """The full (width x proj_dim) unscaled sign matrix for one layer.

    Exposed for fixtures and cross-implementation checks; project_matrix
    generates the same signs chunk by chunk.
    """
    key = stream_key(seed, layer_index)
    return sign_block(key, proj_dim, 0, width)


def project_matrix(matrix: GradientMatrix, spec: ProjectionSpec) -> GradientMatrix:
    """Project each layer block with a seeded sign matrix scaled by 1/sqrt(p).

    Deterministic: identical (matrix, spec) inputs give bit-identical output.
    The output is never flagged normalized (projection changes norms).
    """
    if len(spec.per_layer_dims) != len(matrix.layer_segments):
        raise ValueError(
            f"spec covers {len(spec.per_layer_dims)} layers, "
            f"matrix has {len(matrix.layer_segments)}"
        )
    for (name, width), p in zip(matrix.layer_segments, spec.per_layer_dims):
        if p > width:
            raise ValueError(
                f"layer {name!r}: projected width {p} exceeds original {width}"
            )
    out_blocks = []
    out_segments = []
    offset = 0
    for layer_index, ((name, width), p) in enumerate(
        zip(matrix.layer_segments, spec.per_layer_dims)
    ):
        block = matrix.rows[:, offset : offset + width].astype(np.float64)
        if spec.mode == "identity":
            if p != width:
                raise ValueError(
                    f"identity mode requires projected width == original width "
                    f"for layer {name!r} ({p} != {width})"
                )
            out = block
        else:
            key = stream_key(spec.seed, layer_index)
            out = np.zeros((matrix.n, p), dtype=np.float64)
            scale = 1.0 / np.sqrt(p)
            for r0 in range(0, width, _SIGN_CHUNK_ROWS):
                r1 = min(r0 + _SIGN_CHUNK_ROWS, width)
                signs = sign_block(key, p, r0, r1)
                out += block[:, r0:r1] @ signs
            out *= scale
        out_blocks.append(out.astype(matrix.rows.dtype))
        out_segments.append((name, p))
        offset += width
    return GradientMatrix(
        ids=list(matrix.ids),
        rows=np.concatenate(out_blocks, axis=1) if out_blocks else matrix.rows[:, :0],
        layer_segments=out_segments,
        normalized=False,
    )


def normalize_rows(matrix: GradientMatrix) -> GradientMatrix:
    """Divide every row by its L2 norm; rows are promoted to float64.

    Zero rows are a hard error naming the offending id.
    """
    rows = matrix.rows.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise DegenerateGradientError(
            f"cannot normalize zero gradient for id {matrix.ids[int(zero[0])]!r}"
        )
    return replace(matrix, rows=rows / norms[:, None], normalized=True)


def write_gradient_matrix(matrix: GradientMatrix, path) -> None:
    """Write the binary container (values stored as little-endian float32)."""
    meta = json.dumps(
        {
            "ids": matrix.ids,
            "layer_segments": [[n, w] for n, w in matrix.layer_segments],
        },
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    flags = _FLAG_NORMALIZED if matrix.normalized else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHI", VERSION, flags, len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<QQ", matrix.n, matrix.dim))
        fh.write(np.ascontiguousarray(matrix.rows, dtype="<f4").tobytes())


def read_gradient_matrix(path) -> GradientMatrix:
    """Read a container written by write_gradient_matrix.

    Raises FormatError (with the byte offset) on bad magic or version,
    malformed metadata, id-count mismatch, or truncated payload.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise FormatError(f"file too short for header ({len(data)} bytes)", offset=0)
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    version, flags, meta_len = struct.unpack_from("<HHI", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    meta_start = 12
    meta_end = meta_start + meta_len
    if len(data) < meta_end + 16:
        raise FormatError("truncated metadata or missing shape fields", offset=meta_start)
    try:
        meta = json.loads(data[meta_start:meta_end].decode("utf-8"))
        ids = [str(i) for i in meta["ids"]]
        segments = [(str(n), int(w)) for n, w in meta["layer_segments"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed metadata: {exc}", offset=meta_start) from exc
    n, dim = struct.unpack_from("<QQ", data, meta_end)
    payload_start = meta_end + 16
    expected = 4 * n * dim
    actual = len(data) - payload_start
    if actual != expected:
        raise FormatError(
            f"payload holds {actual} bytes, expected {expected} for {n}x{dim} float32",
            offset=payload_start,
        )
    if len(ids) != n:
        raise FormatError(
            f"metadata lists {len(ids)} ids for {n} rows", offset=meta_start
        )
    rows = np.frombuffer(data, dtype="<f4", count=n * dim, offset=payload_start)
    rows = rows.reshape(int(n), int(dim)).copy()
    return GradientMatrix(
        ids=ids,
        rows=rows,
        layer_segments=segments,
        normalized=bool(flags & _FLAG_NORMALIZED),
    )
