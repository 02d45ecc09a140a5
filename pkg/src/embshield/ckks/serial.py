"""Bit-exact binary serialization for ciphertexts and key sets.

Container layout (little-endian throughout):

    magic 'EHE1' | version u8 | params_digest 32B | level u16 | scale_exp u16
    | scale f64 (exact) | kind u8 | n_comps u8 | n_primes u8 | reserved u8
    | payload: per component, per residue row, N x u64 coefficient words

The u16 scale exponent is the rounded log2 of the scale; the exact float
scale follows it because rescaled ciphertexts carry non-dyadic scales.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from ..errors import MalformedCiphertextError, ParamsMismatchError
from .params import HEParams
from .scheme import Ciphertext, CkksContext, get_context

MAGIC = b"EHE1"
VERSION = 1
KIND_CIPHERTEXT = 1

_HEADER = struct.Struct("<4sB32sHHdBBBB")


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    scale_exp = max(0, min(65535, round(math.log2(ct.scale))))
    n_primes = ct.level + 1
    head = _HEADER.pack(
        MAGIC, VERSION, ct.params_digest, ct.level, scale_exp, ct.scale,
        KIND_CIPHERTEXT, len(ct.comps), n_primes, 0,
    )
    parts = [head]
    for comp in ct.comps:
        parts.append(np.ascontiguousarray(comp, dtype="<u8").tobytes())
    return b"".join(parts)


def deserialize_ciphertext(blob: bytes, params: HEParams) -> Ciphertext:
    ctx = get_context(params)
    if len(blob) < _HEADER.size:
        raise MalformedCiphertextError("truncated header")
    magic, version, digest, level, _scale_exp, scale, kind, n_comps, n_primes, _ = (
        _HEADER.unpack_from(blob, 0)
    )
    if magic != MAGIC or version != VERSION or kind != KIND_CIPHERTEXT:
        raise MalformedCiphertextError("bad magic/version/kind")
    if digest != ctx.digest:
        raise ParamsMismatchError("ciphertext was produced under different parameters")
    if n_primes != level + 1 or not 0 <= level <= params.max_level or n_comps < 2:
        raise MalformedCiphertextError("inconsistent level fields")
    need = _HEADER.size + n_comps * n_primes * ctx.n * 8
    if len(blob) != need:
        raise MalformedCiphertextError(f"payload length {len(blob)} != expected {need}")
    comps = []
    off = _HEADER.size
    for _ in range(n_comps):
        comp = np.frombuffer(blob, dtype="<u8", count=n_primes * ctx.n, offset=off)
        comps.append(comp.reshape(n_primes, ctx.n).astype(np.uint64))
        off += n_primes * ctx.n * 8
    for i in range(n_primes):
        if any(np.any(comp[i] >= ctx.rings[i].pu) for comp in comps):
            raise MalformedCiphertextError("residue out of range")
    return Ciphertext(ctx, comps, float(scale), int(level), digest)
