"""Plaintext-domain template protection schemes.

Four irreversible / perturbing transforms over embeddings:

* windowed multivariate polynomial hashing with user-secret integer
  coefficients and exponents,
* block shuffling under a secret permutation,
* positive/negative template pairs built from a seeded random enlargement,
* Laplacian noise addition with a privacy budget.

All functions are pure given explicit seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import as_embedding
from .errors import (
    DimMismatchError,
    DimTooSmallError,
    InvalidBlockSizeError,
    InvalidParamsError,
    ZeroVectorError,
)

NFR_TEMPLATE_SIZE = 4096


@dataclass(frozen=True)
class PPParams:
    """User secret for the polynomial hash: window length m, coefficient
    bound C, inter-window overlap, and the drawn coefficients/exponents."""

    m: int
    C: int
    overlap: int
    coefficients: tuple[int, ...]
    exponents: tuple[int, ...]
    user_seed: int

    def __post_init__(self) -> None:
        if self.m < 2 or self.C < 1 or not 0 <= self.overlap < self.m:
            raise InvalidParamsError(f"bad (m={self.m}, C={self.C}, overlap={self.overlap})")
        if len(self.coefficients) != self.m or len(self.exponents) != self.m:
            raise InvalidParamsError("coefficients/exponents must have length m")
        if any(c == 0 or abs(c) > self.C for c in self.coefficients):
            raise InvalidParamsError("coefficients must be nonzero integers in [-C, C]")
        if sorted(self.exponents) != list(range(1, self.m + 1)):
            raise InvalidParamsError("exponents must be a permutation of 1..m")

    @property
    def stride(self) -> int:
        return self.m - self.overlap

    def output_dim(self, input_dim: int) -> int:
        return int(np.ceil((input_dim - self.m) / self.stride)) + 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m, "C": self.C, "overlap": self.overlap,
                "coefficients": list(self.coefficients),
                "exponents": list(self.exponents),
                "user_seed": self.user_seed,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PPParams":
        d = json.loads(text)
        return cls(d["m"], d["C"], d["overlap"], tuple(d["coefficients"]),
                   tuple(d["exponents"]), d["user_seed"])


def polyprotect_gen_params(m: int = 5, C: int = 50, overlap: int = 0,
                           user_seed: int = 0) -> PPParams:
    """Draw user-specific coefficients (uniform nonzero integers in [-C, C])
    and exponents (uniform permutation of 1..m), deterministic per seed."""
    if m < 2 or C < 1 or not 0 <= overlap < m:
        raise InvalidParamsError(f"bad (m={m}, C={C}, overlap={overlap})")
    rng = np.random.default_rng(np.random.PCG64(user_seed))
    nonzero = np.concatenate([np.arange(-C, 0), np.arange(1, C + 1)])
    coeffs = tuple(int(x) for x in rng.choice(nonzero, size=m, replace=True))
    exps = tuple(int(x) for x in rng.permutation(m) + 1)
    return PPParams(m, C, overlap, coeffs, exps, user_seed)


def polyprotect_apply(v, p: PPParams) -> np.ndarray:
    """Windowed polynomial hash: output_j = sum_i c_i * w_j[i]^{e_i}.

    Windows advance by stride (m - overlap); the final short window is
    zero-padded.
    """
    arr = as_embedding(v)
    d = arr.shape[0]
    if d < p.m:
        raise DimTooSmallError(f"dim {d} < window m={p.m}")
    n_out = p.output_dim(d)
    padded = np.zeros((n_out - 1) * p.stride + p.m)
    padded[:d] = arr
    idx = np.arange(n_out)[:, None] * p.stride + np.arange(p.m)[None, :]
    windows = padded[idx]  # (n_out, m)
    coeffs = np.array(p.coefficients, dtype=np.float64)
    exps = np.array(p.exponents, dtype=np.float64)
    return (coeffs * windows ** exps).sum(axis=1)


@dataclass(frozen=True)
class MIUParams:
    """Block size and secret inter-block permutation."""

    block_size: int
    permutation: tuple[int, ...]
    seed: int

    def __post_init__(self) -> None:
        if self.block_size < 1:
            raise InvalidBlockSizeError(f"block size {self.block_size}")
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise InvalidParamsError("permutation must be a bijection on block indices")

    def inverse(self) -> "MIUParams":
        inv = np.argsort(np.array(self.permutation))
        return MIUParams(self.block_size, tuple(int(x) for x in inv), self.seed)

    def to_json(self) -> str:
        return json.dumps({"block_size": self.block_size,
                           "permutation": list(self.permutation), "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "MIUParams":
        d = json.loads(text)
        return cls(d["block_size"], tuple(d["permutation"]), d["seed"])


def miu_gen_params(dim: int, block_size: int = 16, seed: int = 0) -> MIUParams:
    if block_size < 1 or dim < block_size:
        raise InvalidBlockSizeError(f"block size {block_size} for dim {dim}")
    n_blocks = int(np.ceil(dim / block_size))
    rng = np.random.default_rng(np.random.PCG64(seed))
    perm = tuple(int(x) for x in rng.permutation(n_blocks))
    return MIUParams(block_size, perm, seed)


def miu_apply(v, p: MIUParams) -> np.ndarray:
    """Partition into blocks of size k (last may be short) and emit them in
    permutation order. Output is a rearrangement of the input values."""
    arr = as_embedding(v)
    k = p.block_size
    if arr.shape[0] < k:
        raise InvalidBlockSizeError(f"dim {arr.shape[0]} < block size {k}")
    n_blocks = int(np.ceil(arr.shape[0] / k))
    if len(p.permutation) != n_blocks:
        raise InvalidParamsError(f"permutation over {len(p.permutation)} blocks, need {n_blocks}")
    blocks = [arr[i * k:(i + 1) * k] for i in range(n_blocks)]
    return np.concatenate([blocks[j] for j in p.permutation])


@dataclass(frozen=True)
class NFRTemplatePair:
    """Positive template plus the stored, privacy-protected negative one."""

    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self) -> None:
        if self.positive.shape != (NFR_TEMPLATE_SIZE,) or self.negative.shape != (NFR_TEMPLATE_SIZE,):
            raise DimMismatchError("templates must have length 4096")


# saturation gain of the enlargement and the minimum value gap enforced when
# drawing negatives; replacements must land far enough from the positive
# value that genuine probes (which stay near it) cannot collide with them
NFR_GAIN = 3.0
NFR_MIN_GAP = 1.0

_nfr_proj_cache: dict[tuple[int, int], np.ndarray] = {}


def _nfr_projection(seed: int, d: int) -> np.ndarray:
    """Enlargement map shared by all records protected under one seed."""
    key = (seed, d)
    if key not in _nfr_proj_cache:
        rng = np.random.default_rng(np.random.PCG64(seed))
        _nfr_proj_cache[key] = rng.normal(scale=1.0 / np.sqrt(d),
                                          size=(NFR_TEMPLATE_SIZE, d))
        if len(_nfr_proj_cache) > 8:
            _nfr_proj_cache.pop(next(iter(_nfr_proj_cache)))
    return _nfr_proj_cache[key]


def nfr_protect(v, seed: int) -> NFRTemplatePair:
    """Enlarge to 4096 via a seeded random linear map + tanh, then build the
    negative template by replacing every position with a value drawn from
    elsewhere in the positive template (redrawn until it differs by more
    than the avoidance gap)."""
    arr = as_embedding(v)
    if float(np.linalg.norm(arr)) == 0.0:
        raise ZeroVectorError("zero vector")
    d = arr.shape[0]
    proj = _nfr_projection(seed, d)
    positive = np.tanh(NFR_GAIN * (proj @ arr) * np.sqrt(d) / np.linalg.norm(arr))
    # per-record replacement stream keyed on the same seed and the data
    rep_rng = np.random.default_rng(
        np.random.PCG64([seed & 0xFFFFFFFF, int(abs(arr[0]) * 1e9) & 0xFFFFFFFF])
    )
    n = NFR_TEMPLATE_SIZE
    own = np.arange(n)
    src = rep_rng.integers(0, n, size=n)
    best_src = src.copy()
    best_gap = np.where(src == own, -1.0, np.abs(positive[src] - positive))
    for _ in range(64):
        bad = (src == own) | (np.abs(positive[src] - positive) <= NFR_MIN_GAP)
        if not np.any(bad):
            break
        src[bad] = rep_rng.integers(0, n, size=int(bad.sum()))
        gap = np.where(src == own, -1.0, np.abs(positive[src] - positive))
        better = gap > best_gap
        best_src[better] = src[better]
        best_gap[better] = gap[better]
    # positions that never met the gap fall back to their best distinct draw
    unresolved = (src == own) | (np.abs(positive[src] - positive) <= NFR_MIN_GAP)
    src[unresolved] = best_src[unresolved]
    if np.any(positive[src] == positive):
        raise ZeroVectorError("template has no distinct values to draw from")
    return NFRTemplatePair(positive, positive[src])


def nfr_compare(probe_positive, gallery_negative, tau: float = 0.5) -> float:
    """Dissimilarity-turned-similarity score: fraction of positions where the
    probe's positive template avoids the stored negative values. Higher means
    more similar."""
    a = np.asarray(probe_positive, dtype=np.float64)
    b = np.asarray(gallery_negative, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"{a.shape} vs {b.shape}")
    hits = np.count_nonzero(np.abs(a - b) <= tau)
    return 1.0 - hits / a.shape[0]


@dataclass(frozen=True)
class DPParams:
    """Laplace mechanism settings: privacy budget epsilon and sensitivity."""

    epsilon: float
    sensitivity: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epsilon <= 0 or self.sensitivity <= 0:
            raise InvalidParamsError("epsilon and sensitivity must be > 0")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


def dp_protect(v, p: DPParams) -> np.ndarray:
    """Add iid Laplace(0, sensitivity/epsilon) noise to every coordinate.

    Callers pass normalized embeddings; the default sensitivity of 2 is the
    diameter of the unit sphere.
    """
    arr = as_embedding(v)
    rng = np.random.default_rng(np.random.PCG64(p.seed))
    return arr + rng.laplace(0.0, p.scale, size=arr.shape)


def dp_protect_batch(mat: np.ndarray, p: DPParams) -> np.ndarray:
    """dp_protect over the rows of a matrix with one sequential noise stream."""
    rng = np.random.default_rng(np.random.PCG64(p.seed))
    return mat + rng.laplace(0.0, p.scale, size=mat.shape)
