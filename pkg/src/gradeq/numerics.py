"""Dense float64 primitives: stable elementwise kernels and seeded RNG.

Matrices throughout the package are plain numpy float64 arrays in C
(row-major) order, shaped (rows, cols); batches of logits are (B, C)
with one column per category. All public kernels map finite inputs to
finite outputs.

Randomness comes from numpy's PCG64 generator keyed by a 64-bit seed
(optionally extended with named stream keys), so any run is
bit-reproducible from its seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DimensionError, NumericError

# Floor used when clamping probabilities before a log.
PROB_FLOOR = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 C-order array, validating finiteness."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={out.ndim}")
    ensure_finite(out, name)
    return out


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, validating finiteness."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got ndim={out.ndim}")
    ensure_finite(out, name)
    return out


def ensure_finite(a: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite values")


def sigmoid(x):
    """Numerically stable logistic function, elementwise.

    Two-branch form: 1/(1+exp(-x)) for x >= 0 and exp(x)/(1+exp(x))
    otherwise, so exp never overflows. Scalars in, float out. Arrays
    keep an extended-precision dtype if they carry one (the
    finite-difference oracle evaluates in longdouble); everything else
    is computed in float64.
    """
    arr = np.asarray(x)
    if arr.dtype != np.longdouble:
        arr = arr.astype(np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def stable_softmax(logits, offsets=None) -> np.ndarray:
    """Softmax of a single row of logits, optionally shifted by offsets.

    The shift is applied first (z + offset), then the max of the shifted
    row is subtracted before exponentiation, so no overflow occurs even
    for very large logits. Output sums to 1.
    """
    z = as_vector(logits, "logits")
    if offsets is not None:
        off = as_vector(offsets, "offsets")
        if off.shape != z.shape:
            raise DimensionError(
                f"offsets length {off.shape[0]} != logits length {z.shape[0]}"
            )
        z = z + off
    if z.shape[0] < 1:
        raise DimensionError("logits must have length >= 1")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(z: np.ndarray, offsets=None) -> np.ndarray:
    """Row-wise stable softmax of a (B, C) matrix.

    offsets, if given, is a length-C vector added to every row before
    normalization (the additive log-term form of a calibrated softmax).
    """
    zz = as_matrix(z, "logits")
    if offsets is not None:
        off = as_vector(offsets, "offsets")
        if off.shape[0] != zz.shape[1]:
            raise DimensionError(
                f"offsets length {off.shape[0]} != logit columns {zz.shape[1]}"
            )
        zz = zz + off[None, :]
    shifted = zz - zz.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Seeded PCG64 generator; extra keys select named substreams.

    make_rng(seed) and make_rng(seed, k) are independent documented
    streams, both fully determined by their arguments. Stream keys may
    be ints or strings; strings are folded to 64 bits with blake2s, so
    the mapping is stable across platforms and interpreter runs. Seeds
    are taken modulo 2**64 so any Python int is a valid seed.
    """
    keys = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in stream:
        if isinstance(k, str):
            k = int.from_bytes(hashlib.blake2s(k.encode(), digest_size=8).digest(), "big")
        keys.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))


def rng_next(rng: np.random.Generator) -> float:
    """Next double in [0, 1) from the generator."""
    return float(rng.random())
