"""CKKS-style approximate homomorphic encryption over packed real slots."""

from .params import HEParams, desk_params, make_params, preset, toy_params
from .ring import PrimeRing, find_ntt_primes, schoolbook_negacyclic
from .scheme import (
    Ciphertext,
    CkksContext,
    KeySet,
    KSwitchKey,
    Plaintext,
    decode,
    decrypt,
    drop_to_level,
    encode,
    encrypt,
    get_context,
    he_add,
    he_add_plain,
    he_mult,
    he_mult_plain,
    he_rescale,
    he_rotate,
    he_sub,
    keygen,
)
from .serial import deserialize_ciphertext, serialize_ciphertext

__all__ = [
    "HEParams", "desk_params", "toy_params", "make_params", "preset",
    "PrimeRing", "find_ntt_primes", "schoolbook_negacyclic",
    "Ciphertext", "CkksContext", "KeySet", "KSwitchKey", "Plaintext",
    "keygen", "encode", "decode", "encrypt", "decrypt",
    "he_add", "he_sub", "he_mult", "he_mult_plain", "he_add_plain",
    "he_rescale", "he_rotate", "drop_to_level", "get_context",
    "serialize_ciphertext", "deserialize_ciphertext",
]
