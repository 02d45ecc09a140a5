"""Approximate homomorphic encryption over packed real slots.

RNS layout: a ring element at level L is a (L+1, N) uint64 matrix of NTT-
domain residues, row i holding the element mod chain prime i. Rescaling
drops the last row. Key switching uses per-prime digit decomposition against
keys lifted to the chain times one dedicated key-switching prime.

Scales are tracked as exact floats; after a multiply the caller rescales.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ..errors import (
    LevelExhaustedError,
    LevelMismatchError,
    MissingRotationKeyError,
    ParamsMismatchError,
    ScaleMismatchError,
    ScaleOverflowError,
    TooManyValuesError,
)
from .params import HEParams
from .ring import PrimeRing

_SCALE_RTOL = 1e-6  # scales closer than this are treated as equal
_HEADROOM_BITS = 8  # plaintext must stay this far under the active modulus


class CkksContext:
    """Precomputed tables for one parameter set: per-prime NTT contexts,
    canonical-embedding twiddles, Galois maps, and CRT constants."""

    def __init__(self, params: HEParams):
        self.params = params
        self.n = params.ring_degree
        self.slots = params.slot_count
        self.digest = params.digest()
        self.rings = [PrimeRing(p, self.n) for p in params.chain_primes]
        self.special = PrimeRing(params.special_prime, self.n)
        self.chain = list(params.chain_primes)
        self.n_chain = len(self.chain)

        # inv(special) mod each chain prime, inv(q_l) mod q_t for t < l
        P = params.special_prime
        self.inv_special = [pow(P, -1, q) for q in self.chain]
        self.inv_chain = [
            [pow(self.chain[l], -1, self.chain[t]) for t in range(l)]
            for l in range(self.n_chain)
        ]
        self.chain_log2 = [math.log2(q) for q in self.chain]

        # canonical embedding: slot j evaluates at zeta^(5^j mod 2N)
        m = 2 * self.n
        exps = np.empty(self.slots, dtype=np.int64)
        e = 1
        for j in range(self.slots):
            exps[j] = e
            e = (e * 5) % m
        self.slot_exponents = exps
        self.slot_to_bin = (exps - 1) // 2            # position in the odd-index DFT
        self.conj_to_bin = (m - exps - 1) // 2
        k = np.arange(self.n)
        self.twist = np.exp(1j * np.pi * k / self.n)          # zeta^k
        self.untwist = np.exp(-1j * np.pi * k / self.n)       # zeta^-k
        self._galois_maps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.rot_galois = {
            1 << i: pow(5, 1 << i, m) for i in range((self.slots).bit_length() - 1)
        }

    # --- canonical embedding ---

    def embed(self, values: np.ndarray, scale: float) -> np.ndarray:
        """Real slot values -> integer coefficient vector at the given scale."""
        z = np.zeros(self.n, dtype=np.complex128)
        z[self.slot_to_bin] = values
        z[self.conj_to_bin] = np.conj(values)
        coeffs = np.fft.fft(z) * self.untwist / self.n
        return np.real(coeffs) * scale

    def unembed(self, coeffs: np.ndarray, scale: float) -> np.ndarray:
        """Real coefficient vector -> real slot values."""
        evals = np.fft.ifft(coeffs * self.twist) * self.n
        return np.real(evals[self.slot_to_bin]) / scale

    # --- galois / rotation index maps ---

    def galois_map(self, gal: int) -> tuple[np.ndarray, np.ndarray]:
        """(source index, negate?) arrays implementing X -> X^gal on coefficients."""
        if gal not in self._galois_maps:
            m = 2 * self.n
            src = np.empty(self.n, dtype=np.int64)
            neg = np.empty(self.n, dtype=bool)
            for i in range(self.n):
                j = (i * gal) % m
                if j < self.n:
                    src[j] = i
                    neg[j] = False
                else:
                    src[j - self.n] = i
                    neg[j - self.n] = True
            self._galois_maps[gal] = (src, neg)
        return self._galois_maps[gal]

    def apply_galois(self, rows: np.ndarray, gal: int) -> np.ndarray:
        """Apply the automorphism to coefficient-domain residue rows."""
        src, neg = self.galois_map(gal)
        out = rows[:, src].copy()
        for i, ring in enumerate(self.rings[: rows.shape[0]]):
            row = out[i]
            out[i] = np.where(neg & (row != 0), ring.pu - row, row)
        return out

    # --- CRT reconstruction (decode path) ---

    def crt_center(self, rows: np.ndarray) -> np.ndarray:
        """Residue rows (coeff domain) -> centered integer coefficients as floats."""
        n_act = rows.shape[0]
        if n_act == 1:
            return self.rings[0].to_centered(rows[0]).astype(np.float64)
        qs = self.chain[:n_act]
        big_q = math.prod(qs)
        total = np.zeros(self.n, dtype=object)
        for i, q in enumerate(qs):
            hat = big_q // q
            w = hat * pow(hat, -1, q) % big_q
            total = total + rows[i].astype(object) * w
        total = total % big_q
        half = big_q // 2
        centered = np.where(total > half, total - big_q, total)
        return np.array([float(x) for x in centered], dtype=np.float64)


_context_cache: dict[bytes, CkksContext] = {}


def get_context(params: HEParams) -> CkksContext:
    d = params.digest()
    if d not in _context_cache:
        _context_cache[d] = CkksContext(params)
    return _context_cache[d]


@dataclass
class Plaintext:
    """Encoded slot vector: coefficient-domain RNS rows plus scale/level."""

    ctx: CkksContext
    rows: np.ndarray  # (level+1, N) uint64, coefficient domain
    scale: float
    level: int
    _ntt: np.ndarray | None = None

    @property
    def ntt_rows(self) -> np.ndarray:
        if self._ntt is None:
            self._ntt = np.stack(
                [self.ctx.rings[i].ntt(self.rows[i]) for i in range(self.rows.shape[0])]
            )
        return self._ntt


@dataclass
class Ciphertext:
    """Pair (or pre-relinearization triple) of NTT-domain ring elements."""

    ctx: CkksContext
    comps: list[np.ndarray]  # each (level+1, N) uint64, NTT domain
    scale: float
    level: int
    params_digest: bytes

    def copy(self) -> "Ciphertext":
        return Ciphertext(self.ctx, [c.copy() for c in self.comps],
                          self.scale, self.level, self.params_digest)


@dataclass
class KSwitchKey:
    """Digit-decomposed switching key from some s' to s.

    b/a have shape (n_digits, n_chain + 1, N); the last prime row is the
    key-switching prime.
    """

    b: np.ndarray
    a: np.ndarray


@dataclass
class KeySet:
    params: HEParams
    params_digest: bytes
    secret_coeffs: np.ndarray          # ternary int64, private
    s_ntt: np.ndarray                  # (n_chain + 1, N) incl. special prime
    pk_b: np.ndarray                   # (n_chain, N) NTT
    pk_a: np.ndarray
    relin: KSwitchKey
    rotation_keys: dict[int, KSwitchKey]
    seed: int

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.params_digest)
        h.update(self.secret_coeffs.tobytes())
        h.update(self.pk_b.tobytes())
        h.update(self.pk_a.tobytes())
        h.update(self.relin.b.tobytes())
        h.update(self.relin.a.tobytes())
        for step in sorted(self.rotation_keys):
            h.update(self.rotation_keys[step].b.tobytes())
            h.update(self.rotation_keys[step].a.tobytes())
        return h.hexdigest()


# --- key generation ---

def _sample_gaussian_rows(ctx: CkksContext, rng, rings) -> np.ndarray:
    e = np.rint(rng.normal(0.0, ctx.params.error_stddev, ctx.n)).astype(np.int64)
    return np.stack([r.ntt(r.from_signed(e)) for r in rings])


def _uniform_rows(ctx: CkksContext, rng, rings) -> np.ndarray:
    return np.stack(
        [rng.integers(0, r.p, ctx.n, dtype=np.uint64) for r in rings]
    )


def _make_kswitch(ctx: CkksContext, rng, s_prime_ntt: np.ndarray,
                  s_ntt: np.ndarray) -> KSwitchKey:
    """Key switching key from s' to s over chain + special primes.

    Component j carries (P mod q_j) * s' on chain prime j only, so the
    digit-sum identity holds at every level.
    """
    all_rings = ctx.rings + [ctx.special]
    n_all = ctx.n_chain + 1
    P = ctx.params.special_prime
    b = np.empty((ctx.n_chain, n_all, ctx.n), dtype=np.uint64)
    a = np.empty_like(b)
    for j in range(ctx.n_chain):
        a_j = _uniform_rows(ctx, rng, all_rings)
        e_j = _sample_gaussian_rows(ctx, rng, all_rings)
        for t, ring in enumerate(all_rings):
            bt = ring.sub(e_j[t], ring.mul(a_j[t], s_ntt[t]))
            if t == j:
                bt = ring.add(bt, ring.mul_scalar(s_prime_ntt[t], P % ring.p))
            b[j, t] = bt
            a[j, t] = a_j[t]
    return KSwitchKey(b, a)


def keygen(params: HEParams, seed: int) -> KeySet:
    """Deterministic key generation: secret, public, relinearization, and
    rotation keys for every power-of-two step up to slot_count / 2."""
    ctx = get_context(params)
    rng = np.random.default_rng(np.random.PCG64(seed))
    all_rings = ctx.rings + [ctx.special]

    s = rng.integers(-1, 2, ctx.n).astype(np.int64)
    s_ntt = np.stack([r.ntt(r.from_signed(s)) for r in all_rings])

    pk_a = _uniform_rows(ctx, rng, ctx.rings)
    e = _sample_gaussian_rows(ctx, rng, ctx.rings)
    pk_b = np.stack(
        [ctx.rings[i].sub(e[i], ctx.rings[i].mul(pk_a[i], s_ntt[i]))
         for i in range(ctx.n_chain)]
    )

    s2_ntt = np.stack([r.mul(s_ntt[t], s_ntt[t]) for t, r in enumerate(all_rings)])
    relin = _make_kswitch(ctx, rng, s2_ntt, s_ntt)

    rotation_keys = {}
    for step in sorted(ctx.rot_galois):
        gal = ctx.rot_galois[step]
        src, neg = ctx.galois_map(gal)
        s_gal = np.where(neg, -s[src], s[src])
        s_gal_ntt = np.stack([r.ntt(r.from_signed(s_gal)) for r in all_rings])
        rotation_keys[step] = _make_kswitch(ctx, rng, s_gal_ntt, s_ntt)

    return KeySet(params, ctx.digest, s, s_ntt, pk_b, pk_a, relin, rotation_keys, seed)


# --- encode / decode ---

def encode(values, scale: float | None, params: HEParams,
           level: int | None = None) -> Plaintext:
    """Pack real values into slots at the given scale (default: params.scale)."""
    ctx = get_context(params)
    vals = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if vals.shape[0] > ctx.slots:
        raise TooManyValuesError(f"{vals.shape[0]} values > {ctx.slots} slots")
    if scale is None:
        scale = params.scale
    if level is None:
        level = params.max_level
    padded = np.zeros(ctx.slots)
    padded[: vals.shape[0]] = vals
    coeffs = ctx.embed(padded, scale)
    max_mag = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    active_bits = sum(ctx.chain_log2[: level + 1])
    if max_mag > 0 and math.log2(max_mag) + _HEADROOM_BITS > active_bits:
        raise ScaleOverflowError(
            f"encoded magnitude 2^{math.log2(max_mag):.1f} too large for "
            f"level-{level} modulus of 2^{active_bits:.0f}"
        )
    if max_mag >= 2.0 ** 62:
        raise ScaleOverflowError("encoded coefficients exceed 62 bits")
    ints = np.rint(coeffs).astype(np.int64)
    rows = np.stack([ctx.rings[i].from_signed(ints) for i in range(level + 1)])
    return Plaintext(ctx, rows, float(scale), level)


def decode(pt: Plaintext) -> np.ndarray:
    """Invert encode: slot values as a real array of length slot_count."""
    coeffs = pt.ctx.crt_center(pt.rows)
    return pt.ctx.unembed(coeffs, pt.scale)


# --- encrypt / decrypt ---

def encrypt(pt: Plaintext, keys: KeySet, rng=None) -> Ciphertext:
    """Public-key encryption; randomized unless a seeded rng stream is given."""
    ctx = pt.ctx
    if keys.params_digest != ctx.digest:
        raise ParamsMismatchError("plaintext and keys use different parameters")
    if rng is None:
        rng = np.random.default_rng()
    n_act = pt.level + 1
    v = rng.integers(-1, 2, ctx.n).astype(np.int64)
    e0 = np.rint(rng.normal(0.0, ctx.params.error_stddev, ctx.n)).astype(np.int64)
    e1 = np.rint(rng.normal(0.0, ctx.params.error_stddev, ctx.n)).astype(np.int64)
    pt_ntt = pt.ntt_rows
    c0 = np.empty((n_act, ctx.n), dtype=np.uint64)
    c1 = np.empty_like(c0)
    for i in range(n_act):
        ring = ctx.rings[i]
        v_ntt = ring.ntt(ring.from_signed(v))
        e0_ntt = ring.ntt(ring.from_signed(e0))
        e1_ntt = ring.ntt(ring.from_signed(e1))
        c0[i] = ring.add(ring.add(ring.mul(v_ntt, keys.pk_b[i]), e0_ntt), pt_ntt[i])
        c1[i] = ring.add(ring.mul(v_ntt, keys.pk_a[i]), e1_ntt)
    return Ciphertext(ctx, [c0, c1], pt.scale, pt.level, ctx.digest)


def decrypt(ct: Ciphertext, keys: KeySet) -> Plaintext:
    ctx = ct.ctx
    if keys.params_digest != ct.params_digest:
        raise ParamsMismatchError("ciphertext and keys use different parameters")
    n_act = ct.level + 1
    rows = np.empty((n_act, ctx.n), dtype=np.uint64)
    for i in range(n_act):
        ring = ctx.rings[i]
        phase = ct.comps[0][i]
        s_pow = keys.s_ntt[i]
        for comp in ct.comps[1:]:
            phase = ring.add(phase, ring.mul(comp[i], s_pow))
            s_pow = ring.mul(s_pow, keys.s_ntt[i])
        rows[i] = ring.intt(phase)
    return Plaintext(ctx, rows, ct.scale, ct.level)


# --- level and scale plumbing ---

def _check_pair(a: Ciphertext, b: Ciphertext) -> None:
    if a.params_digest != b.params_digest:
        raise ParamsMismatchError("mixed parameter sets")
    if a.level != b.level:
        raise LevelMismatchError(f"levels {a.level} vs {b.level}")


def _scales_equal(sa: float, sb: float) -> bool:
    return abs(sa - sb) <= _SCALE_RTOL * max(sa, sb)


def drop_to_level(ct: Ciphertext, level: int) -> Ciphertext:
    """Exact modulus reduction: drop trailing RNS rows, value and scale kept."""
    if level == ct.level:
        return ct
    if level > ct.level or level < 0:
        raise LevelMismatchError(f"cannot drop from level {ct.level} to {level}")
    comps = [c[: level + 1].copy() for c in ct.comps]
    return Ciphertext(ct.ctx, comps, ct.scale, level, ct.params_digest)


# --- homomorphic operations ---

def he_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a, b)
    if not _scales_equal(a.scale, b.scale):
        raise ScaleMismatchError(f"scales {a.scale:.6g} vs {b.scale:.6g}")
    ctx = a.ctx
    n_act = a.level + 1
    comps = []
    for ca, cb in zip(a.comps, b.comps):
        comps.append(np.stack([ctx.rings[i].add(ca[i], cb[i]) for i in range(n_act)]))
    return Ciphertext(ctx, comps, max(a.scale, b.scale), a.level, a.params_digest)


def he_sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a, b)
    if not _scales_equal(a.scale, b.scale):
        raise ScaleMismatchError(f"scales {a.scale:.6g} vs {b.scale:.6g}")
    ctx = a.ctx
    n_act = a.level + 1
    comps = []
    for ca, cb in zip(a.comps, b.comps):
        comps.append(np.stack([ctx.rings[i].sub(ca[i], cb[i]) for i in range(n_act)]))
    return Ciphertext(ctx, comps, max(a.scale, b.scale), a.level, a.params_digest)


def _check_mult_headroom(ctx: CkksContext, level: int, scale: float) -> None:
    active_bits = sum(ctx.chain_log2[: level + 1])
    if math.log2(scale) + _HEADROOM_BITS > active_bits:
        raise LevelExhaustedError(
            f"product scale 2^{math.log2(scale):.1f} does not fit the "
            f"level-{level} modulus (2^{active_bits:.0f})"
        )


def he_mult(a: Ciphertext, b: Ciphertext, relin_key: KSwitchKey) -> Ciphertext:
    """Relinearized slotwise product; caller rescales before stacking depth."""
    _check_pair(a, b)
    if a.level < 1:
        raise LevelExhaustedError("multiplication needs at least one level to rescale")
    if len(a.comps) != 2 or len(b.comps) != 2:
        raise LevelMismatchError("operands must be relinearized 2-component ciphertexts")
    ctx = a.ctx
    out_scale = a.scale * b.scale
    _check_mult_headroom(ctx, a.level, out_scale)
    n_act = a.level + 1
    d0 = np.empty((n_act, ctx.n), dtype=np.uint64)
    d1 = np.empty_like(d0)
    d2_coeff = np.empty_like(d0)
    for i in range(n_act):
        ring = ctx.rings[i]
        a0, a1 = a.comps[0][i], a.comps[1][i]
        b0, b1 = b.comps[0][i], b.comps[1][i]
        d0[i] = ring.mul(a0, b0)
        d1[i] = ring.add(ring.mul(a0, b1), ring.mul(a1, b0))
        d2_coeff[i] = ring.intt(ring.mul(a1, b1))
    ks0, ks1 = _key_switch(ctx, d2_coeff, relin_key, a.level)
    for i in range(n_act):
        ring = ctx.rings[i]
        d0[i] = ring.add(d0[i], ks0[i])
        d1[i] = ring.add(d1[i], ks1[i])
    return Ciphertext(ctx, [d0, d1], out_scale, a.level, a.params_digest)


def he_mult_plain(a: Ciphertext, p: Plaintext) -> Ciphertext:
    if a.level != p.level:
        raise LevelMismatchError(f"ciphertext level {a.level} vs plaintext {p.level}")
    ctx = a.ctx
    out_scale = a.scale * p.scale
    _check_mult_headroom(ctx, a.level, out_scale)
    n_act = a.level + 1
    pn = p.ntt_rows
    comps = [
        np.stack([ctx.rings[i].mul(c[i], pn[i]) for i in range(n_act)])
        for c in a.comps
    ]
    return Ciphertext(ctx, comps, out_scale, a.level, a.params_digest)


def he_add_plain(a: Ciphertext, p: Plaintext) -> Ciphertext:
    if a.level != p.level:
        raise LevelMismatchError(f"ciphertext level {a.level} vs plaintext {p.level}")
    if not _scales_equal(a.scale, p.scale):
        raise ScaleMismatchError(f"scales {a.scale:.6g} vs {p.scale:.6g}")
    ctx = a.ctx
    n_act = a.level + 1
    pn = p.ntt_rows
    c0 = np.stack([ctx.rings[i].add(a.comps[0][i], pn[i]) for i in range(n_act)])
    return Ciphertext(ctx, [c0] + [c.copy() for c in a.comps[1:]],
                      a.scale, a.level, a.params_digest)


def he_rescale(a: Ciphertext) -> Ciphertext:
    """Divide by the last active chain prime; level drops by exactly one."""
    if a.level < 1:
        raise LevelExhaustedError("no level left to rescale")
    ctx = a.ctx
    l = a.level
    ring_l = ctx.rings[l]
    comps = []
    for c in a.comps:
        centered = ring_l.to_centered(ring_l.intt(c[l]))
        rows = np.empty((l, ctx.n), dtype=np.uint64)
        for t in range(l):
            ring = ctx.rings[t]
            r = ring.ntt(ring.from_signed(centered))
            rows[t] = ring.mul_scalar(ring.sub(c[t], r), ctx.inv_chain[l][t])
        comps.append(rows)
    return Ciphertext(ctx, comps, a.scale / ctx.chain[l], l - 1, a.params_digest)


def _key_switch(ctx: CkksContext, d_coeff: np.ndarray, ksk: KSwitchKey,
                level: int) -> tuple[np.ndarray, np.ndarray]:
    """Switch coefficient-domain digits d (per active prime) to the base key.

    Returns NTT-domain rows over the active primes, already divided by the
    key-switching prime.
    """
    n_act = level + 1
    targets = list(range(n_act)) + [ctx.n_chain]  # chain rows + special row
    rings = ctx.rings + [ctx.special]
    acc0 = np.zeros((n_act + 1, ctx.n), dtype=np.uint64)
    acc1 = np.zeros_like(acc0)
    for j in range(n_act):
        dj = d_coeff[j]
        for ti, trow in enumerate(targets):
            ring = rings[trow]
            lift = dj if trow == j else dj % ring.pu
            lift_ntt = ring.ntt(np.ascontiguousarray(lift))
            ring.mul_acc(acc0[ti], lift_ntt, ksk.b[j, trow])
            ring.mul_acc(acc1[ti], lift_ntt, ksk.a[j, trow])
    # divide by the special prime with rounding
    sp = ctx.special
    out0 = np.empty((n_act, ctx.n), dtype=np.uint64)
    out1 = np.empty_like(out0)
    for acc, out in ((acc0, out0), (acc1, out1)):
        centered = sp.to_centered(sp.intt(acc[n_act]))
        for t in range(n_act):
            ring = ctx.rings[t]
            r = ring.ntt(ring.from_signed(centered))
            out[t] = ring.mul_scalar(ring.sub(acc[t], r), ctx.inv_special[t])
    return out0, out1


def _rotate_pow2(ct: Ciphertext, step: int, keys: KeySet) -> Ciphertext:
    ctx = ct.ctx
    if step not in keys.rotation_keys:
        raise MissingRotationKeyError(f"no rotation key for step {step}")
    gal = ctx.rot_galois[step]
    n_act = ct.level + 1
    coeff0 = np.stack([ctx.rings[i].intt(ct.comps[0][i]) for i in range(n_act)])
    coeff1 = np.stack([ctx.rings[i].intt(ct.comps[1][i]) for i in range(n_act)])
    g0 = ctx.apply_galois(coeff0, gal)
    g1 = ctx.apply_galois(coeff1, gal)
    ks0, ks1 = _key_switch(ctx, g1, keys.rotation_keys[step], ct.level)
    c0 = np.stack(
        [ctx.rings[i].add(ctx.rings[i].ntt(g0[i]), ks0[i]) for i in range(n_act)]
    )
    return Ciphertext(ctx, [c0, ks1], ct.scale, ct.level, ct.params_digest)


def he_rotate(a: Ciphertext, step: int, keys: KeySet) -> Ciphertext:
    """Cyclically shift slots left by `step` (composed from power-of-two keys)."""
    ctx = a.ctx
    step %= ctx.slots
    if step == 0:
        return a.copy()
    out = a
    bit = 0
    while step:
        if step & 1:
            out = _rotate_pow2(out, 1 << bit, keys)
        step >>= 1
        bit += 1
    return out
