"""Per-prime negacyclic polynomial ring Z_p[X]/(X^n + 1) with NTT multiply.

Each PrimeRing owns the twiddle tables for one NTT-friendly prime
(p = 1 mod 2n). Multiplication in the evaluation (NTT) domain agrees with
schoolbook negacyclic convolution exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParamsError
from . import _kernels as K


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 2^64."""
    if n < 2:
        return False
    for sp in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % sp == 0:
            return n == sp
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(bits: list[int], n: int, exclude: set[int] | None = None) -> list[int]:
    """Smallest distinct primes p = 1 (mod 2n) with p > 2^(bits-1), per entry."""
    found: list[int] = []
    taken = set(exclude or ())
    for b in bits:
        p = (1 << (b - 1)) + 1
        # align to 1 mod 2n
        p += (-(p - 1)) % (2 * n)
        while p in taken or not is_prime(p):
            p += 2 * n
        if p >= (1 << b) * 2:
            raise InvalidParamsError(f"no NTT prime near {b} bits for n={n}")
        found.append(p)
        taken.add(p)
    return found


def _primitive_2n_root(p: int, n: int) -> int:
    """A primitive 2n-th root of unity mod p."""
    order = 2 * n
    assert (p - 1) % order == 0
    cof = (p - 1) // order
    for g in range(2, 1000):
        x = pow(g, cof, p)
        if pow(x, n, p) == p - 1:  # order exactly 2n
            return x
    raise InvalidParamsError(f"no 2n-th root found mod {p}")


def _bit_reverse(x: int, bits: int) -> int:
    out = 0
    for _ in range(bits):
        out = (out << 1) | (x & 1)
        x >>= 1
    return out


def _shoup(w: int, p: int) -> int:
    return (w << 64) // p


class PrimeRing:
    """NTT context for one prime: twiddle tables and vectorized mod-ops."""

    def __init__(self, p: int, n: int):
        if n & (n - 1) or n < 4:
            raise InvalidParamsError("ring degree must be a power of two >= 4")
        if (p - 1) % (2 * n) != 0 or not is_prime(p) or p >= (1 << 61):
            raise InvalidParamsError(f"{p} is not an NTT prime (< 2^61) for n={n}")
        self.p = p
        self.n = n
        self.pu = np.uint64(p)
        ratio = (1 << 128) // p
        self.ratio_lo = np.uint64(ratio & 0xFFFFFFFFFFFFFFFF)
        self.ratio_hi = np.uint64(ratio >> 64)

        logn = n.bit_length() - 1
        psi = _primitive_2n_root(p, n)
        ipsi = pow(psi, -1, p)
        w = np.empty(n, dtype=np.uint64)
        iw = np.empty(n, dtype=np.uint64)
        cur, icur = 1, 1
        w_nat = np.empty(n, dtype=np.uint64)
        iw_nat = np.empty(n, dtype=np.uint64)
        for i in range(n):
            w_nat[i] = cur
            iw_nat[i] = icur
            cur = cur * psi % p
            icur = icur * ipsi % p
        for i in range(n):
            w[i] = w_nat[_bit_reverse(i, logn)]
            iw[i] = iw_nat[_bit_reverse(i, logn)]
        self.w_brv = w
        self.iw_brv = iw
        self.ws_brv = np.array([_shoup(int(x), p) for x in w], dtype=np.uint64)
        self.iws_brv = np.array([_shoup(int(x), p) for x in iw], dtype=np.uint64)
        ninv = pow(n, -1, p)
        self.n_inv = np.uint64(ninv)
        self.n_inv_shoup = np.uint64(_shoup(ninv, p))
        self.psi = psi

    # --- elementwise ops (inputs/outputs always in [0, p)) ---

    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        s = a + b
        return np.where(s >= self.pu, s - self.pu, s)

    def sub(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        s = a + (self.pu - b)
        return np.where(s >= self.pu, s - self.pu, s)

    def neg(self, a: np.ndarray) -> np.ndarray:
        return np.where(a == 0, a, self.pu - a)

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.empty_like(a)
        K.vec_mulmod(out, a, b, self.pu, self.ratio_lo, self.ratio_hi)
        return out

    def mul_acc(self, acc: np.ndarray, a: np.ndarray, b: np.ndarray) -> None:
        K.vec_mulmod_acc(acc, a, b, self.pu, self.ratio_lo, self.ratio_hi)

    def mul_scalar(self, a: np.ndarray, w: int) -> np.ndarray:
        out = np.empty_like(a)
        wm = w % self.p
        K.vec_mulmod_scalar(out, a, np.uint64(wm), np.uint64(_shoup(wm, self.p)), self.pu)
        return out

    # --- transforms ---

    def ntt(self, a: np.ndarray) -> np.ndarray:
        out = a.copy()
        K.ntt_forward(out, self.w_brv, self.ws_brv, self.pu)
        return out

    def intt(self, a: np.ndarray) -> np.ndarray:
        out = a.copy()
        K.ntt_inverse(out, self.iw_brv, self.iws_brv, self.pu,
                      self.n_inv, self.n_inv_shoup)
        return out

    def from_signed(self, coeffs) -> np.ndarray:
        """Signed integer coefficients -> residues in [0, p)."""
        arr = np.asarray(coeffs)
        return (arr % self.p).astype(np.uint64)

    def to_centered(self, res: np.ndarray) -> np.ndarray:
        """Residues -> centered signed representatives in (-p/2, p/2]."""
        half = self.p // 2
        out = res.astype(np.int64)
        return np.where(res > half, out - np.int64(self.p), out)

    def multiply_negacyclic(self, a, b) -> np.ndarray:
        """Full ring product of two coefficient-form polynomials (mod X^n + 1)."""
        fa = self.ntt(self.from_signed(a))
        fb = self.ntt(self.from_signed(b))
        return self.intt(self.mul(fa, fb))


def schoolbook_negacyclic(a, b, p: int) -> np.ndarray:
    """O(n^2) reference negacyclic product for oracle tests."""
    a = [int(x) % p for x in a]
    b = [int(x) % p for x in b]
    n = len(a)
    out = [0] * n
    for i in range(n):
        if a[i] == 0:
            continue
        for j in range(n):
            k = i + j
            term = a[i] * b[j]
            if k < n:
                out[k] = (out[k] + term) % p
            else:
                out[k - n] = (out[k - n] - term) % p
    return np.array(out, dtype=np.uint64)
