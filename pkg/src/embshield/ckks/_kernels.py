"""Numba kernels for modular ring arithmetic on 64-bit residues.

All moduli are NTT-friendly primes below 2^61, so lazy Harvey butterflies
(values kept in [0, 4p) mid-transform) fit in uint64 without overflow.
128-bit products are assembled from 32-bit limbs; variable-by-variable
products reduce through a two-word Barrett ratio, variable-by-constant
products through Shoup precomputation.
"""

import numpy as np
from numba import njit, uint64

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


@njit(uint64(uint64, uint64), cache=True, inline="always")
def mulhi64(a, b):
    """High 64 bits of the 128-bit product a*b."""
    a0 = a & _MASK32
    a1 = a >> _SHIFT32
    b0 = b & _MASK32
    b1 = b >> _SHIFT32
    ll = a0 * b0
    lh = a0 * b1
    hl = a1 * b0
    mid = (ll >> _SHIFT32) + (lh & _MASK32) + (hl & _MASK32)
    return a1 * b1 + (lh >> _SHIFT32) + (hl >> _SHIFT32) + (mid >> _SHIFT32)


@njit(uint64(uint64, uint64, uint64, uint64), cache=True, inline="always")
def mulmod_shoup_lazy(x, w, w_shoup, p):
    """x*w mod p in [0, 2p), any x, with w_shoup = floor(w * 2^64 / p)."""
    q = mulhi64(x, w_shoup)
    return x * w - q * p


@njit(uint64(uint64, uint64, uint64, uint64, uint64), cache=True, inline="always")
def mulmod_barrett(a, b, p, ratio_lo, ratio_hi):
    """a*b mod p in [0, p) via two-word Barrett reduction of the 128-bit product."""
    # 128-bit product (zhi, zlo)
    a0 = a & _MASK32
    a1 = a >> _SHIFT32
    b0 = b & _MASK32
    b1 = b >> _SHIFT32
    ll = a0 * b0
    lh = a0 * b1
    hl = a1 * b0
    mid = (ll >> _SHIFT32) + (lh & _MASK32) + (hl & _MASK32)
    zhi = a1 * b1 + (lh >> _SHIFT32) + (hl >> _SHIFT32) + (mid >> _SHIFT32)
    zlo = a * b
    # q = floor(z * ratio / 2^128), keeping only the low word
    carry = mulhi64(zlo, ratio_lo)
    tmp1 = zlo * ratio_hi + carry
    tmp3 = mulhi64(zlo, ratio_hi) + (uint64(1) if tmp1 < carry else uint64(0))
    t2lo = zhi * ratio_lo
    tmp1b = tmp1 + t2lo
    carry2 = mulhi64(zhi, ratio_lo) + (uint64(1) if tmp1b < t2lo else uint64(0))
    q = zhi * ratio_hi + tmp3 + carry2
    r = zlo - q * p
    if r >= p:
        r -= p
    return r


@njit(cache=True)
def ntt_forward(a, w_brv, ws_brv, p):
    """In-place negacyclic NTT, natural order in, bit-reversed order out.

    w_brv[k] = psi^{bitrev(k)} for psi a primitive 2n-th root mod p.
    Inputs in [0, p); outputs reduced back to [0, p).
    """
    n = a.shape[0]
    two_p = p + p
    t = n
    m = 1
    while m < n:
        t >>= 1
        for i in range(m):
            w = w_brv[m + i]
            ws = ws_brv[m + i]
            j1 = 2 * i * t
            for j in range(j1, j1 + t):
                x = a[j]
                if x >= two_p:
                    x -= two_p
                y = mulmod_shoup_lazy(a[j + t], w, ws, p)
                a[j] = x + y
                a[j + t] = x + two_p - y
        m <<= 1
    for j in range(n):
        x = a[j]
        if x >= two_p:
            x -= two_p
        if x >= p:
            x -= p
        a[j] = x


@njit(cache=True)
def ntt_inverse(a, iw_brv, iws_brv, p, n_inv, n_inv_shoup):
    """In-place inverse of ntt_forward: bit-reversed in, natural order out."""
    n = a.shape[0]
    two_p = p + p
    t = 1
    m = n
    while m > 1:
        j1 = 0
        h = m >> 1
        for i in range(h):
            w = iw_brv[h + i]
            ws = iws_brv[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                s = u + v
                if s >= two_p:
                    s -= two_p
                a[j] = s
                a[j + t] = mulmod_shoup_lazy(u + two_p - v, w, ws, p)
            j1 += 2 * t
        t <<= 1
        m = h
    for j in range(n):
        x = mulmod_shoup_lazy(a[j], n_inv, n_inv_shoup, p)
        if x >= p:
            x -= p
        a[j] = x


@njit(cache=True)
def vec_mulmod(out, a, b, p, ratio_lo, ratio_hi):
    for i in range(a.shape[0]):
        out[i] = mulmod_barrett(a[i], b[i], p, ratio_lo, ratio_hi)


@njit(cache=True)
def vec_mulmod_acc(acc, a, b, p, ratio_lo, ratio_hi):
    """acc = (acc + a*b) mod p, elementwise."""
    for i in range(a.shape[0]):
        r = acc[i] + mulmod_barrett(a[i], b[i], p, ratio_lo, ratio_hi)
        if r >= p:
            r -= p
        acc[i] = r


@njit(cache=True)
def vec_mulmod_scalar(out, a, w, w_shoup, p):
    """out = a*w mod p for a fixed scalar w (Shoup)."""
    for i in range(a.shape[0]):
        r = mulmod_shoup_lazy(a[i], w, w_shoup, p)
        if r >= p:
            r -= p
        out[i] = r
