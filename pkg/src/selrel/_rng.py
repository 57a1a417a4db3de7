"""Counter-based deterministic bit streams.

All projection randomness in this package comes from the SplitMix64 finalizer
applied to explicit counters, so any word of any stream can be computed
independently (no sequential state). This keeps projection memory-bounded,
order-independent, and bit-reproducible across platforms and languages: a
second implementation only needs the three constants and the mixing function
below to generate identical sign matrices.

Stream layout:
    key     = mix64(mix64(seed + GAMMA) + (stream + 1) * GAMMA)
    word_j  = mix64(key + (j + 1) * GAMMA)          (j = 0, 1, 2, ...)
Each 64-bit word supplies 64 Rademacher signs, least-significant bit first.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer (mod 2^64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int) -> int:
    """Key for an independent stream derived from (seed, stream index)."""
    k0 = mix64((seed + GAMMA) & MASK64)
    return mix64((k0 + ((stream + 1) * GAMMA)) & MASK64)


def stream_words(key: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream as a uint64 array."""
    j = np.arange(start, start + count, dtype=np.uint64)
    z = np.uint64(key) + (j + np.uint64(1)) * np.uint64(GAMMA)
    return _mix64_array(z)


def sign_block(key: int, n_cols: int, row_start: int, row_stop: int) -> np.ndarray:
    """Rows ``row_start .. row_stop-1`` of the stream's sign matrix.

    Entry (r, c) is +1 or -1 according to bit ``(r * n_cols + c) % 64`` of
    word ``(r * n_cols + c) // 64``. Returns float64 of shape
    (row_stop - row_start, n_cols).
    """
    if n_cols <= 0 or row_stop < row_start:
        raise ValueError("empty sign block requested")
    flat = (
        np.arange(row_start, row_stop, dtype=np.uint64)[:, None] * np.uint64(n_cols)
        + np.arange(n_cols, dtype=np.uint64)[None, :]
    )
    word_idx = flat >> np.uint64(6)
    j = word_idx.ravel()
    z = np.uint64(key) + (j + np.uint64(1)) * np.uint64(GAMMA)
    words = _mix64_array(z).reshape(flat.shape)
    bits = (words >> (flat & np.uint64(63))) & np.uint64(1)
    return 2.0 * bits.astype(np.float64) - 1.0


def derive_seed(master: int, *parts) -> int:
    """Deterministic 63-bit seed from a master seed and a tag sequence.

    Parts may be ints or strings; strings are folded in as UTF-8 bytes.
    The result is non-negative so it can feed ``numpy.random.default_rng``.
    """
    k = mix64((master + GAMMA) & MASK64)
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            for off in range(0, len(data), 8):
                chunk = int.from_bytes(data[off : off + 8], "little")
                k = mix64((k + ((chunk + 1) * GAMMA)) & MASK64)
            k = mix64((k + ((len(data) + 1) * GAMMA)) & MASK64)
        elif isinstance(part, (int, np.integer)):
            k = mix64((k + ((int(part) + 1) * GAMMA)) & MASK64)
        else:
            raise TypeError(f"seed parts must be int or str, got {type(part)!r}")
    return k >> 1
