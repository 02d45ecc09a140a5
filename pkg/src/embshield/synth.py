"""Deterministic synthetic embedding datasets with planted structure.

Identity clusters live on the unit sphere; each soft-biometric class adds a
fixed signed pattern inside a dedicated coordinate block, so attribute
leakage provably exists for the evaluation harness to measure and for
protection schemes to suppress.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import ATTRIBUTES, Dataset, SubjectRecord
from .errors import InvalidConfigError, InvalidFractionError

# attribute -> (block start, block width) in the raw coordinate layout
ATTR_BLOCKS = {"age": (0, 8), "gender": (8, 8), "ethnicity": (16, 8)}


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 512
    n_identities: int = 80
    records_per_identity: int = 50
    attr_class_counts: dict = field(
        default_factory=lambda: {"age": 4, "gender": 2, "ethnicity": 4}
    )
    cluster_spread: float = 0.02
    attr_signal_strength: float = 0.06
    seed: int = 7

    def validate(self) -> None:
        widths = sum(w for _, w in ATTR_BLOCKS.values())
        if self.dim < 8 * widths:
            raise InvalidConfigError(f"dim {self.dim} < 8 * attribute block width {widths}")
        if self.n_identities < 1 or self.records_per_identity < 1:
            raise InvalidConfigError("counts must be >= 1")
        if self.cluster_spread <= 0:
            raise InvalidConfigError("cluster_spread must be > 0")
        for name in ATTRIBUTES:
            if self.attr_class_counts.get(name, 0) < 1:
                raise InvalidConfigError(f"missing class count for {name}")


def _class_pattern(attr: str, cls: int, n_classes: int, width: int) -> np.ndarray:
    """Fixed +/-1 pattern for one attribute class; classes are pairwise distinct."""
    # bits of the class index, repeated across the block, sign-encoded
    bits = [(cls >> b) & 1 for b in range(max(1, int(np.ceil(np.log2(max(n_classes, 2))))))]
    pat = np.array([1.0 if bits[i % len(bits)] else -1.0 for i in range(width)])
    # offset alternation so class 0 is not the all -1 vector of class patterns
    flip = np.where(np.arange(width) % n_classes == cls, 1.0, -1.0)
    return pat * flip


def generate_dataset(cfg: SynthConfig) -> Dataset:
    """Generate a dataset with identity clusters and attribute-carrying blocks.

    Byte-identical output for equal configs: one sequential PCG64 stream
    drives centroids, labels, and per-record noise.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))

    centroids = rng.normal(size=(cfg.n_identities, cfg.dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)

    # balanced subject-level attribute assignment (round-robin over a shuffle)
    attrs = {}
    for name in ATTRIBUTES:
        k = cfg.attr_class_counts[name]
        order = rng.permutation(cfg.n_identities)
        lab = np.empty(cfg.n_identities, dtype=np.int64)
        lab[order] = np.arange(cfg.n_identities) % k
        attrs[name] = lab

    patterns = {
        name: np.stack(
            [
                _class_pattern(name, c, cfg.attr_class_counts[name], ATTR_BLOCKS[name][1])
                for c in range(cfg.attr_class_counts[name])
            ]
        )
        for name in ATTRIBUTES
    }

    records = []
    for ident in range(cfg.n_identities):
        base = centroids[ident].copy()
        for name in ATTRIBUTES:
            start, width = ATTR_BLOCKS[name]
            base[start:start + width] += (
                cfg.attr_signal_strength * patterns[name][attrs[name][ident]]
            )
        noise = rng.normal(scale=cfg.cluster_spread,
                           size=(cfg.records_per_identity, cfg.dim))
        vecs = base[None, :] + noise
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        for r in range(cfg.records_per_identity):
            records.append(
                SubjectRecord(vecs[r], ident,
                              int(attrs["age"][ident]),
                              int(attrs["gender"][ident]),
                              int(attrs["ethnicity"][ident]))
            )
    return Dataset(records, cfg.dim, dict(cfg.attr_class_counts), "full")


def split_dataset(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Identity-stratified split; each identity with >=2 records hits both sides.

    Identities with a single record go to train.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidFractionError(f"train_fraction {train_fraction} outside (0, 1)")
    rng = np.random.default_rng(np.random.PCG64(seed))
    by_identity: dict[int, list[int]] = {}
    for i, rec in enumerate(ds.records):
        by_identity.setdefault(rec.identity, []).append(i)

    train_idx, test_idx = [], []
    for ident in sorted(by_identity):
        idx = np.array(by_identity[ident])
        if len(idx) == 1:
            train_idx.extend(idx.tolist())
            continue
        perm = rng.permutation(len(idx))
        n_train = int(round(train_fraction * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)  # both splits non-empty
        train_idx.extend(idx[perm[:n_train]].tolist())
        test_idx.extend(idx[perm[n_train:]].tolist())

    def subset(indices, tag):
        recs = [ds.records[i] for i in sorted(indices)]
        return Dataset(recs, ds.dim, dict(ds.class_counts), tag)

    return subset(train_idx, "train"), subset(test_idx, "test")
