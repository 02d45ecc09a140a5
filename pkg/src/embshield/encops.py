"""Encrypted-domain functional layer on top of the HE engine.

Inner products via rotate-and-sum folds, polynomial evaluation with a
baby-step/giant-step schedule, approximate cosine similarity through a
fitted inverse-square-root polynomial, and the windowed polynomial hash
applied directly to ciphertext slots.

Slot layout convention: ciphertexts may pack several vectors in consecutive
equal-size blocks. Every op here acts uniformly on all blocks, so a single
call processes a whole batch; the block-start slot of each block carries
that block's result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .ckks import scheme as S
from .ckks.scheme import Ciphertext, KeySet
from .errors import (
    DimMismatchError,
    DomainViolationError,
    IllConditionedError,
    InvalidIntervalError,
    InvalidParamsError,
    LevelExhaustedError,
)
from .protect import PPParams

_COND_LIMIT = 1e12
_AUDIT_POINTS = 10001


@dataclass(frozen=True)
class PolyApprox:
    """Dense polynomial approximant with its audited worst-case error."""

    coefficients: tuple[float, ...]  # ascending powers
    degree: int
    interval: tuple[float, float]
    max_rel_error: float

    def __call__(self, x):
        return npoly.polyval(x, np.asarray(self.coefficients))

    def to_json(self) -> str:
        return json.dumps(
            {
                "coefficients": list(self.coefficients),
                "degree": self.degree,
                "interval": list(self.interval),
                "max_rel_error": self.max_rel_error,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PolyApprox":
        d = json.loads(text)
        return cls(tuple(d["coefficients"]), d["degree"],
                   (d["interval"][0], d["interval"][1]), d["max_rel_error"])


def fit_invsqrt_poly(degree: int = 8, interval: tuple[float, float] = (0.5, 2.0),
                     n_nodes: int = 1024) -> PolyApprox:
    """Least-squares fit of 1/sqrt(x) on Chebyshev-spaced nodes.

    The returned approximant records its maximum relative error measured on
    a dense uniform audit grid over the interval.
    """
    lo, hi = interval
    if not 0 < lo < hi:
        raise InvalidIntervalError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    if n_nodes <= degree:
        raise InvalidParamsError("n_nodes must exceed the degree")
    i = np.arange(n_nodes)
    nodes = (lo + hi) / 2 + (hi - lo) / 2 * np.cos(np.pi * (i + 0.5) / n_nodes)
    vander = npoly.polyvander(2 * (nodes - lo) / (hi - lo) - 1, degree)
    cond = np.linalg.cond(vander)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise IllConditionedError(f"Vandermonde condition {cond:.3g} too large")
    target = 1.0 / np.sqrt(nodes)
    scaled_coeffs, *_ = np.linalg.lstsq(vander, target, rcond=None)
    # map the [-1, 1] fit back to monomials in x
    lin = np.array([-(lo + hi) / (hi - lo), 2.0 / (hi - lo)])
    coeffs = np.zeros(degree + 1)
    basis = np.array([1.0])
    for k, c in enumerate(scaled_coeffs):
        coeffs[: basis.size] += c * basis
        basis = npoly.polymul(basis, lin)
    grid = np.linspace(lo, hi, _AUDIT_POINTS)
    approx = npoly.polyval(grid, coeffs)
    rel = np.max(np.abs(approx - 1.0 / np.sqrt(grid)) * np.sqrt(grid))
    return PolyApprox(tuple(float(c) for c in coeffs), degree, (lo, hi), float(rel))


# --- scale-managed primitives ---

def mult_rescale(a: Ciphertext, b: Ciphertext, keys: KeySet) -> Ciphertext:
    """Align levels, multiply, relinearize, rescale."""
    lv = min(a.level, b.level)
    return S.he_rescale(
        S.he_mult(S.drop_to_level(a, lv), S.drop_to_level(b, lv), keys.relin)
    )


def mult_plain_rescale(ct: Ciphertext, values, target_scale: float | None = None) -> Ciphertext:
    """Multiply by plaintext values encoded so the rescaled result lands on
    target_scale (default: keep the ciphertext's scale)."""
    ctx = ct.ctx
    if ct.level < 1:
        raise LevelExhaustedError("no level left for plaintext multiply + rescale")
    q_drop = ctx.chain[ct.level]
    if target_scale is None:
        target_scale = ct.scale
    plain_scale = q_drop * target_scale / ct.scale
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 0:
        vals = np.full(ctx.slots, float(vals))
    pt = S.encode(vals, plain_scale, ctx.params, level=ct.level)
    return S.he_rescale(S.he_mult_plain(ct, pt))


def add_plain(ct: Ciphertext, values) -> Ciphertext:
    ctx = ct.ctx
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 0:
        vals = np.full(ctx.slots, float(vals))
    pt = S.encode(vals, ct.scale, ctx.params, level=ct.level)
    return S.he_add_plain(ct, pt)


def fold_contiguous(ct: Ciphertext, n: int, keys: KeySet) -> Ciphertext:
    """Rotate-and-sum so every slot j holds the sum of slots j..j+n-1.

    For vectors packed in n-aligned zero-padded blocks, each block-start slot
    ends up with its block's total.
    """
    out = ct
    step = 1
    while step < n:
        out = S.he_add(out, S.he_rotate(out, step, keys))
        step <<= 1
    return out


def fold_strided(ct: Ciphertext, stride: int, count: int, keys: KeySet) -> Ciphertext:
    """Sum `count` slots spaced `stride` apart into the starting slot."""
    partial = {1: ct}  # sums of 2^k consecutive strided terms
    k = 1
    while k * 2 <= count:
        prev = partial[k]
        partial[k * 2] = S.he_add(prev, S.he_rotate(prev, stride * k, keys))
        k *= 2
    out = None
    covered = 0
    for size in sorted(partial, reverse=True):
        if covered + size <= count:
            piece = partial[size]
            if covered:
                piece = S.he_rotate(piece, stride * covered, keys)
            out = piece if out is None else S.he_add(out, piece)
            covered += size
    return out


def enc_inner_product(a: Ciphertext, b: Ciphertext, n: int, keys: KeySet) -> Ciphertext:
    """Slotwise multiply then log2(n) rotate-add folds; slot 0 of each
    n-block holds that block's inner product."""
    ctx = a.ctx
    if n < 1 or n & (n - 1):
        raise DimMismatchError(f"n={n} must be a power of two (callers zero-pad)")
    if n > ctx.slots:
        raise DimMismatchError(f"n={n} exceeds slot count {ctx.slots}")
    return fold_contiguous(mult_rescale(a, b, keys), n, keys)


# --- polynomial evaluation ---

class _PowerCache:
    """Monomial powers of one ciphertext with level/scale bookkeeping."""

    def __init__(self, x: Ciphertext, keys: KeySet):
        self.keys = keys
        self.pows: dict[int, Ciphertext] = {1: x}

    def get(self, k: int) -> Ciphertext:
        if k not in self.pows:
            half = k // 2
            a = self.get(half)
            b = self.get(k - half)
            self.pows[k] = mult_rescale(a, b, self.keys)
        return self.pows[k]


def enc_poly_eval(x: Ciphertext, p: PolyApprox, keys: KeySet) -> Ciphertext:
    """Evaluate p slotwise with a baby-step/giant-step schedule.

    Multiplicative depth is ceil(log2(degree)) + 1; the required input level
    is checked up front.
    """
    deg = p.degree
    coeffs = list(p.coefficients) + [0.0] * (deg + 1 - len(p.coefficients))
    need = math.ceil(math.log2(max(deg, 2))) + 2
    if x.level < need:
        raise LevelExhaustedError(f"level {x.level} < required {need} for degree {deg}")
    target = x.ctx.params.scale

    if all(c == 0.0 for c in coeffs[1:]):
        zero = mult_plain_rescale(x, 0.0, target_scale=target)
        return add_plain(zero, coeffs[0])

    b = 2
    while b * b < deg + 1:
        b <<= 1
    n_groups = (deg + 1 + b - 1) // b
    cache = _PowerCache(x, keys)
    baby_used = [
        k for k in range(2, b)
        if any(i * b + k <= deg and coeffs[i * b + k] != 0.0 for i in range(n_groups))
    ]
    for k in baby_used:
        cache.get(k)
    baby_level = min(cache.pows[k].level for k in [1] + baby_used)
    giants = {i: cache.get(b * i) for i in range(1, n_groups)}
    # groups form at baby_level-1; giant products consume one more level
    work_level = baby_level - 1
    if giants:
        work_level = min(work_level, min(g.level for g in giants.values()))
    out_level = work_level - 1 if giants else work_level

    def group_sum(i: int, tgt_scale: float) -> tuple[Ciphertext | None, float]:
        """Sum of c_{ib+k} x^k for k>=1 at (baby_level-1, tgt_scale); the
        constant part is returned separately."""
        acc = None
        for k in range(1, b):
            idx = i * b + k
            if idx > deg or coeffs[idx] == 0.0:
                continue
            t = S.drop_to_level(cache.pows[k], baby_level)
            term = mult_plain_rescale(t, coeffs[idx], target_scale=tgt_scale)
            acc = term if acc is None else S.he_add(acc, term)
        return acc, coeffs[i * b] if i * b <= deg else 0.0

    result = None
    for i in range(n_groups - 1, -1, -1):
        if i == 0:
            g, const = group_sum(0, target)
            if g is not None and const:
                g = add_plain(g, const)
            piece = None
            if g is not None:
                piece = S.drop_to_level(g, out_level)
            elif const:
                zero = mult_plain_rescale(S.drop_to_level(x, baby_level), 0.0,
                                          target_scale=target)
                piece = S.drop_to_level(add_plain(zero, const), out_level)
        else:
            giant = S.drop_to_level(giants[i], work_level)
            g_target = target * x.ctx.chain[work_level] / giant.scale
            g, const = group_sum(i, g_target)
            if g is None and const == 0.0:
                continue
            if g is not None:
                if const:
                    g = add_plain(g, const)
                piece = S.he_rescale(
                    S.he_mult(S.drop_to_level(g, work_level), giant, keys.relin)
                )
            else:
                piece = mult_plain_rescale(giant, const, target_scale=target)
            piece = S.drop_to_level(piece, out_level)
        if piece is not None:
            result = piece if result is None else S.he_add(result, piece)
    return result


# --- encrypted cosine similarity ---

def enc_cosine(a: Ciphertext, b: Ciphertext, n: int, p: PolyApprox, keys: KeySet,
               norm_hints: tuple[float, float] | None = None,
               positions: tuple[int, int] | None = None) -> Ciphertext:
    """enc( <a,b> * p(<a,a>) * p(<b,b>) ); with unit-ish operands the
    block-start slots approximate the cosine similarity.

    The caller's public pre-scaling must place the squared norms inside the
    approximant's fitted interval; when plaintext-side hints are available
    they are checked here. `positions=(stride, count)` folds over strided
    slots instead of a contiguous power-of-two block, matching the layout
    the encrypted polynomial hash emits.
    """
    if norm_hints is not None:
        lo, hi = p.interval
        for h in norm_hints:
            if not lo <= h <= hi:
                raise DomainViolationError(
                    f"squared norm {h:.4g} outside fitted interval [{lo}, {hi}]"
                )

    def ip_fold(x: Ciphertext, y: Ciphertext) -> Ciphertext:
        prod = mult_rescale(x, y, keys)
        if positions is None:
            if n < 1 or n & (n - 1) or n > a.ctx.slots:
                raise DimMismatchError(f"n={n} must be a power of two within slots")
            return fold_contiguous(prod, n, keys)
        return fold_strided(prod, positions[0], positions[1], keys)

    ip = ip_fold(a, b)
    pa = enc_poly_eval(ip_fold(a, a), p, keys)
    pb = enc_poly_eval(ip_fold(b, b), p, keys)
    out = mult_rescale(ip, pa, keys)
    return mult_rescale(out, pb, keys)


# --- encrypted windowed polynomial hash ---

def _as_param_list(params, n_blocks: int) -> list[PPParams]:
    if isinstance(params, PPParams):
        return [params] * n_blocks
    plist = list(params)
    if len(plist) > n_blocks:
        raise InvalidParamsError(f"{len(plist)} parameter sets for {n_blocks} blocks")
    plist = plist + [plist[-1]] * (n_blocks - len(plist))
    first = plist[0]
    for p in plist:
        if p.m != first.m or p.overlap != first.overlap:
            raise InvalidParamsError("all blocks must share window length and overlap")
    return plist


def enc_polyprotect(v: Ciphertext, p: PPParams | Sequence[PPParams], keys: KeySet,
                    dim: int, block: int | None = None,
                    mask_output: bool = True, post_scale=1.0) -> Ciphertext:
    """Windowed polynomial hash on ciphertext slots.

    Each `block`-aligned slot group holds one dim-length vector (zero-padded
    to the block size); parameters may vary per block for per-user secrets.
    Decrypting the result yields the plaintext hash values at stride
    positions within each block; with mask_output the remaining slots are
    zeroed instead of holding fold residue.

    post_scale (a scalar or one value per block) multiplies the output
    values through the plaintext masks: the public pre-scaling that keeps
    downstream squared norms inside a fitted approximant interval.
    """
    ctx = v.ctx
    if block is None:
        block = ctx.slots
    if block < 1 or ctx.slots % block or dim > block:
        raise InvalidParamsError(f"bad block {block} for dim {dim}, {ctx.slots} slots")
    n_blocks = ctx.slots // block
    plist = _as_param_list(p, n_blocks)
    m, stride = plist[0].m, plist[0].stride
    if dim < m:
        raise InvalidParamsError(f"dim {dim} < window m={m}")
    if v.level < math.ceil(math.log2(m)) + 2:
        raise LevelExhaustedError(
            f"level {v.level} < {math.ceil(math.log2(m)) + 2} required for m={m}"
        )
    n_out = plist[0].output_dim(dim)
    target = ctx.params.scale

    # power cache for x^(e-1); depth ceil(log2 m) overall
    cache = _PowerCache(v, keys)
    used_exponents = {pp.exponents[r] for pp in set(plist) for r in range(m)}
    for k in sorted({e - 1 for e in used_exponents} - {0}):
        cache.get(k)
    # deepest term: one masked multiply, plus one product for exponents > 1
    term_level = v.level - 1
    for e in used_exponents:
        if e > 1:
            term_level = min(term_level, min(v.level - 1, cache.pows[e - 1].level) - 1)

    out_positions = np.arange(n_out) * stride

    contrib = None
    for r in range(m):
        # group blocks by the exponent drawn at this window offset
        masks_by_e: dict[int, np.ndarray] = {}
        for blk, pp in enumerate(plist):
            e = pp.exponents[r]
            mask = masks_by_e.setdefault(e, np.zeros(ctx.slots))
            pos = out_positions + r
            pos = pos[pos < dim]
            mask[blk * block + pos] = pp.coefficients[r]
        term_r = None
        for e, mask in masks_by_e.items():
            if e == 1:
                mx = mult_plain_rescale(v, mask, target_scale=target)
                term = S.drop_to_level(mx, term_level)
            else:
                power = cache.pows[e - 1]
                lv = min(v.level - 1, power.level)
                # pick the mask scale so the final term lands exactly on target
                inner_target = (
                    target * v.ctx.chain[lv] / power.scale
                )
                mx = mult_plain_rescale(v, mask, target_scale=inner_target)
                term = S.he_rescale(
                    S.he_mult(S.drop_to_level(mx, lv), S.drop_to_level(power, lv),
                              keys.relin)
                )
                term = S.drop_to_level(term, term_level)
            term_r = term if term_r is None else S.he_add(term_r, term)
        if r:
            term_r = S.he_rotate(term_r, r, keys)
        contrib = term_r if contrib is None else S.he_add(contrib, term_r)

    scales = np.broadcast_to(np.asarray(post_scale, dtype=np.float64), (n_blocks,))
    if mask_output:
        indicator = np.zeros(ctx.slots)
        for blk in range(n_blocks):
            indicator[blk * block + out_positions] = scales[blk]
        contrib = mult_plain_rescale(contrib, indicator, target_scale=target)
    elif np.any(scales != 1.0):
        full = np.repeat(scales, block)
        contrib = mult_plain_rescale(contrib, full, target_scale=target)
    return contrib
