"""embshield: multi-layer embedding protection and leakage evaluation.

Compression, approximate homomorphic encryption, irreversible polynomial
hashing, and soft-biometric leakage metrics over synthetic embedding
datasets.
"""

__version__ = "0.1.0"
