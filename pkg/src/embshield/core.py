"""Embedding representation, normalization, compression, and plaintext matching.

Embeddings are plain 1-D float64 numpy arrays; every public operation
validates shape and finiteness on the way in. All similarity math runs in
double precision.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DimMismatchError,
    EmptyGalleryError,
    InsufficientDataError,
    InvalidDimError,
    ZeroVectorError,
)

ATTRIBUTES = ("age", "gender", "ethnicity")


def as_embedding(v) -> np.ndarray:
    """Coerce to a validated 1-D float64 vector (finite entries only)."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidDimError(f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ZeroVectorError("embedding contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class SubjectRecord:
    """One embedding with its identity and soft-biometric labels."""

    embedding: np.ndarray
    identity: int
    age: int
    gender: int
    ethnicity: int

    def attr(self, name: str) -> int:
        if name not in ATTRIBUTES:
            raise KeyError(name)
        return getattr(self, name)


@dataclass
class Dataset:
    """A collection of records sharing one embedding dimension."""

    records: list[SubjectRecord]
    dim: int
    class_counts: dict[str, int]
    split_tag: str = "train"

    def __post_init__(self) -> None:
        for rec in self.records:
            if rec.embedding.shape != (self.dim,):
                raise DimMismatchError(
                    f"record dim {rec.embedding.shape} != dataset dim {self.dim}"
                )
            for name in ATTRIBUTES:
                if not 0 <= rec.attr(name) < self.class_counts[name]:
                    raise InvalidDimError(f"{name} label {rec.attr(name)} out of range")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def identities(self) -> list[int]:
        return sorted({r.identity for r in self.records})

    def embeddings(self) -> np.ndarray:
        """Stack all embeddings into an (n_records, dim) matrix."""
        return np.stack([r.embedding for r in self.records])

    def labels(self, attr: str) -> np.ndarray:
        return np.array([r.attr(attr) for r in self.records], dtype=np.int64)

    def identity_labels(self) -> np.ndarray:
        return np.array([r.identity for r in self.records], dtype=np.int64)

    def with_embeddings(self, mat: np.ndarray, split_tag: str | None = None) -> "Dataset":
        """Copy of the dataset with embeddings replaced row-for-row."""
        if mat.shape[0] != len(self.records):
            raise DimMismatchError("row count mismatch")
        recs = [
            SubjectRecord(as_embedding(mat[i]), r.identity, r.age, r.gender, r.ethnicity)
            for i, r in enumerate(self.records)
        ]
        return Dataset(recs, mat.shape[1], dict(self.class_counts),
                       split_tag if split_tag is not None else self.split_tag)


class MatchScore(NamedTuple):
    value: float
    kind: str  # "genuine" | "impostor"


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm."""
    arr = as_embedding(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize all-zero vector")
    return arr / norm


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Computation order is fixed (dot / (norm_a * norm_b)) so the result is
    exactly symmetric in its arguments.
    """
    va, vb = as_embedding(a), as_embedding(b)
    if va.shape != vb.shape:
        raise DimMismatchError(f"dims {va.shape[0]} vs {vb.shape[0]}")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for zero vector")
    return float(np.dot(va, vb) / (na * nb))


def mrl_truncate(v, d: int) -> np.ndarray:
    """Keep the first d coordinates and re-normalize to unit norm.

    Nested-prefix compression: the truncated prefix is itself treated as a
    complete representation.
    """
    arr = as_embedding(v)
    if not 1 <= d <= arr.shape[0]:
        raise InvalidDimError(f"d={d} outside [1, {arr.shape[0]}]")
    return l2_normalize(arr[:d])


def rank1_identify(probe, gallery: Sequence[tuple[int, np.ndarray]]) -> int:
    """Identity of the gallery entry most cosine-similar to the probe.

    Ties break toward the lowest identity id for determinism.
    """
    p = as_embedding(probe)
    if len(gallery) == 0:
        raise EmptyGalleryError("gallery is empty")
    best_id, best_score = None, -np.inf
    for ident, vec in gallery:
        s = cosine_similarity(p, vec)
        if s > best_score or (s == best_score and (best_id is None or ident < best_id)):
            best_id, best_score = ident, s
    return int(best_id)


def rank1_identify_batch(probes: np.ndarray, gallery_mat: np.ndarray,
                         gallery_ids: np.ndarray) -> np.ndarray:
    """Vectorized rank-1 identification for a probe matrix against a gallery.

    Same contract as rank1_identify (max cosine, lowest-id tie break) but in
    one matrix product.
    """
    if gallery_mat.shape[0] == 0:
        raise EmptyGalleryError("gallery is empty")
    if probes.shape[1] != gallery_mat.shape[1]:
        raise DimMismatchError("probe/gallery dim mismatch")
    pn = probes / np.linalg.norm(probes, axis=1, keepdims=True)
    gn = gallery_mat / np.linalg.norm(gallery_mat, axis=1, keepdims=True)
    scores = pn @ gn.T
    # stable tie-break: order gallery by id so argmax picks the lowest id
    order = np.argsort(gallery_ids, kind="stable")
    best = np.argmax(scores[:, order], axis=1)
    return gallery_ids[order][best]


def pairwise_scores(dataset: Dataset) -> list[MatchScore]:
    """All cross-record cosine scores, labeled genuine/impostor.

    Deterministic order: pairs (i, j) with i < j, row-major over the
    dataset's record order.
    """
    ids = dataset.identity_labels()
    if len(np.unique(ids)) < 2 or np.max(np.bincount(ids - ids.min())) < 2:
        raise InsufficientDataError("need >=2 identities and >=2 records for some identity")
    mat = dataset.embeddings()
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ZeroVectorError("zero vector in dataset")
    unit = mat / norms[:, None]
    sims = unit @ unit.T
    n = len(dataset)
    iu, ju = np.triu_indices(n, k=1)
    genuine = ids[iu] == ids[ju]
    return [
        MatchScore(float(sims[i, j]), "genuine" if g else "impostor")
        for i, j, g in zip(iu, ju, genuine)
    ]


# --- CSV interchange format ---
# header: id,age,gender,ethnicity,v0,...,v{D-1}; floats with 9 significant digits

def dataset_to_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_csv(dataset, fh)


def dataset_to_csv_string(dataset: Dataset) -> str:
    buf = io.StringIO()
    _write_csv(dataset, buf)
    return buf.getvalue()


def _write_csv(dataset: Dataset, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["id", "age", "gender", "ethnicity"] + [f"v{i}" for i in range(dataset.dim)])
    for rec in dataset.records:
        writer.writerow(
            [rec.identity, rec.age, rec.gender, rec.ethnicity]
            + [f"{x:.9g}" for x in rec.embedding]
        )


def dataset_from_csv(path, class_counts: dict[str, int] | None = None,
                     split_tag: str = "train") -> Dataset:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["id", "age", "gender", "ethnicity"]:
            raise InvalidDimError(f"unexpected CSV header {header[:4]}")
        dim = len(header) - 4
        records = []
        for row in reader:
            if not row:
                continue
            ident, age, gender, eth = (int(x) for x in row[:4])
            emb = np.array([float(x) for x in row[4:]], dtype=np.float64)
            if emb.shape[0] != dim:
                raise DimMismatchError("ragged CSV row")
            records.append(SubjectRecord(emb, ident, age, gender, eth))
    if class_counts is None:
        class_counts = {
            name: int(max(r.attr(name) for r in records)) + 1 for name in ATTRIBUTES
        }
    return Dataset(records, dim, class_counts, split_tag)
