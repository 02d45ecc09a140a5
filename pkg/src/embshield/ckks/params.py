"""Encryption parameter sets over power-of-two cyclotomic rings.

Two presets ship with the package:

* ``toy``  - N=2^10, chain primes of {40, 30, 40} bits, scale 2^20. Fast
  enough for unit tests; roughly one multiplicative level of headroom.
* ``desk`` - N=2^13, 12 chain primes of {60, 60, 41 x 10} bits, scale 2^40.
  Supports the ~10 multiplicative levels the protected-matching pipeline
  needs (windowed polynomial hash + degree-8 approximant + inner products).

One extra 'key-switching' prime (60/40 bits) rides along outside the chain;
it only ever backs relinearization and rotation keys and is never part of a
ciphertext's level budget. Rescaling drops chain primes from the end of the
list, so the desk chain keeps its wide decode primes for the final levels.

Security note: these rings trade security margin for desk-scale runtime.
At N=2^13 the total modulus (~571 bits including the key-switching prime)
sits well above what a 128-bit-secure deployment would pair with this ring
degree; estimates put the preset noticeably below 128 bits. The presets are
benchmarking and research vehicles, not production parameter sets.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ..errors import InvalidParamsError
from .ring import find_ntt_primes


@dataclass(frozen=True)
class HEParams:
    ring_degree: int
    chain_primes: tuple[int, ...]
    special_prime: int
    scale: float
    error_stddev: float = 3.2
    preset_name: str = "custom"

    def __post_init__(self) -> None:
        n = self.ring_degree
        if n & (n - 1) or n < 8:
            raise InvalidParamsError("ring_degree must be a power of two >= 8")
        if len(self.chain_primes) < 2:
            raise InvalidParamsError("modulus chain needs at least 2 primes")
        for p in (*self.chain_primes, self.special_prime):
            if (p - 1) % (2 * n) != 0:
                raise InvalidParamsError(f"prime {p} is not 1 mod 2N")
        if len(set(self.chain_primes) | {self.special_prime}) != len(self.chain_primes) + 1:
            raise InvalidParamsError("primes must be distinct")
        if self.scale <= 0 or self.scale != 2.0 ** round(_log2(self.scale)):
            raise InvalidParamsError("scale must be a positive power of two")
        if self.scale >= min(self.chain_primes):
            raise InvalidParamsError("scale must be below the smallest chain prime")

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def max_level(self) -> int:
        return len(self.chain_primes) - 1

    def digest(self) -> bytes:
        blob = json.dumps(
            {
                "n": self.ring_degree,
                "chain": list(self.chain_primes),
                "special": self.special_prime,
                "scale": self.scale,
                "sigma": self.error_stddev,
                "preset": self.preset_name,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).digest()


def _log2(x: float) -> float:
    import math

    return math.log2(x)


def make_params(ring_degree: int, chain_bits: list[int], special_bits: int,
                scale: float, preset_name: str = "custom",
                error_stddev: float = 3.2) -> HEParams:
    chain = find_ntt_primes(chain_bits, ring_degree)
    special = find_ntt_primes([special_bits], ring_degree, exclude=set(chain))[0]
    return HEParams(ring_degree, tuple(chain), special, scale,
                    error_stddev, preset_name)


def toy_params() -> HEParams:
    return make_params(1 << 10, [40, 30, 40], 40, 2.0 ** 20, "toy")


def desk_params() -> HEParams:
    # two wide decode primes first (dropped last); ten rescale primes just
    # above 2^40 keep the working scale flat across the chain
    return make_params(1 << 13, [60, 60] + [41] * 10, 60, 2.0 ** 40, "desk")


PRESETS = {"toy": toy_params, "desk": desk_params}


def preset(name: str) -> HEParams:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidParamsError(f"unknown preset {name!r} (have {sorted(PRESETS)})") from None
