"""Leakage attacks and utility/privacy metrics.

A deterministic multinomial logistic classifier stands in for the attacker;
ciphertext bytes are featurized as a histogram plus raw prefix; privacy gain
and suppression rate reduce attribute accuracies before/after protection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLabelsError,
    DimMismatchError,
    MalformedCiphertextError,
    MissingClassError,
    RangeViolationError,
)

ATTRIBUTES = ("age", "gender", "ethnicity")


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    weight_decay: float = 1e-2
    seed: int = 0


@dataclass
class ClassifierModel:
    weights: np.ndarray          # (n_classes, n_features)
    bias: np.ndarray             # (n_classes,)
    n_classes: int
    train_config: TrainConfig
    feat_mean: np.ndarray = field(default=None)
    feat_scale: np.ndarray = field(default=None)

    def _prep(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feat_mean) / self.feat_scale

    def scores(self, features: np.ndarray) -> np.ndarray:
        """Class logits for each row."""
        return self._prep(np.asarray(features, dtype=np.float64)) @ self.weights.T + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(features), axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_linear_classifier(features: np.ndarray, labels: np.ndarray,
                            cfg: TrainConfig | None = None) -> ClassifierModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Fixed epochs, deterministic per seed; features are standardized
    internally and the statistics ride along in the model.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise DimMismatchError("non-finite features")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateLabelsError("need at least 2 classes")
    n_classes = int(classes.max()) + 1
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    Xs = (X - mean) / scale

    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    W = rng.normal(0.0, 1e-3, size=(n_classes, Xs.shape[1]))
    b = np.zeros(n_classes)
    onehot = np.zeros((y.shape[0], n_classes))
    onehot[np.arange(y.shape[0]), y] = 1.0
    n = Xs.shape[0]
    for _ in range(cfg.epochs):
        probs = _softmax(Xs @ W.T + b)
        grad_logits = (probs - onehot) / n
        W -= cfg.learning_rate * (grad_logits.T @ Xs + cfg.weight_decay * W)
        b -= cfg.learning_rate * grad_logits.sum(axis=0)
    return ClassifierModel(W, b, n_classes, cfg, mean, scale)


def macro_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """One-vs-rest macro-averaged AUC from per-class scores (rank statistic)."""
    labels = np.asarray(labels)
    aucs = []
    for c in np.unique(labels):
        pos = scores[labels == c, c]
        neg = scores[labels != c, c]
        if pos.size == 0 or neg.size == 0:
            continue
        order = np.argsort(np.concatenate([pos, neg]), kind="mergesort")
        ranks = np.empty(order.size)
        ranks[order] = np.arange(1, order.size + 1)
        # midranks for ties
        allv = np.concatenate([pos, neg])
        sortv = allv[order]
        i = 0
        while i < sortv.size:
            j = i
            while j + 1 < sortv.size and sortv[j + 1] == sortv[i]:
                j += 1
            if j > i:
                ranks[order[i:j + 1]] = (i + 1 + j + 1) / 2.0
            i = j + 1
        r_pos = ranks[: pos.size].sum()
        auc = (r_pos - pos.size * (pos.size + 1) / 2) / (pos.size * neg.size)
        aucs.append(auc)
    if not aucs:
        raise MissingClassError("no class had both positives and negatives")
    return float(np.mean(aucs))


def evaluate_attribute_leakage(train_features, train_labels, test_features,
                               test_labels, cfg: TrainConfig | None = None
                               ) -> tuple[float, float]:
    """Train the attacker on train, report (top-1 accuracy, macro AUC) on test."""
    train_features = np.asarray(train_features, dtype=np.float64)
    test_features = np.asarray(test_features, dtype=np.float64)
    if train_features.shape[1] != test_features.shape[1]:
        raise DimMismatchError("train/test feature dims differ")
    model = train_linear_classifier(train_features, train_labels, cfg)
    sc = model.scores(test_features)
    acc = float(np.mean(np.argmax(sc, axis=1) == np.asarray(test_labels)))
    auc = macro_auc(sc, np.asarray(test_labels))
    return acc, auc


def chance_level(labels) -> float:
    """Majority-class frequency: the reference point for 'random guessing'."""
    labels = np.asarray(labels)
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / labels.size)


def ciphertext_byte_features(ct_bytes: bytes, n_raw: int = 64) -> np.ndarray:
    """Normalized 256-bin byte histogram concatenated with the first n_raw
    bytes scaled to [0, 1]. Fixed output length 256 + n_raw."""
    if not isinstance(ct_bytes, (bytes, bytearray)) or len(ct_bytes) == 0:
        raise MalformedCiphertextError("empty or non-bytes ciphertext")
    arr = np.frombuffer(bytes(ct_bytes), dtype=np.uint8)
    hist = np.bincount(arr, minlength=256).astype(np.float64)
    hist /= hist.sum()
    raw = np.zeros(n_raw)
    take = min(n_raw, arr.size)
    raw[:take] = arr[:take] / 255.0
    return np.concatenate([hist, raw])


def privacy_gain(r_o: float, r_p: float, percent: bool = False) -> float:
    """(1 - R_p) - (1 - R_o), i.e. R_o - R_p: accuracy drop due to protection."""
    hi = 100.0 if percent else 1.0
    for v in (r_o, r_p):
        if not 0.0 <= v <= hi:
            raise RangeViolationError(f"rate {v} outside [0, {hi}]")
    return r_o - r_p


def suppression_rate(a_o: float, a_p: float) -> float:
    """(A_o - A_p) / A_o: relative attribute-accuracy reduction."""
    if a_o == 0:
        raise ZeroDivisionError("baseline accuracy is zero")
    return (a_o - a_p) / a_o


@dataclass
class MetricsReport:
    """Utility/privacy summary of one pipeline run.

    Accuracies are fractions in [0, 1]; privacy gain per attribute is
    baseline accuracy minus protected accuracy, suppression rate the same
    drop relative to baseline.
    """

    rank1_accuracy: float
    attribute_accuracy: dict
    attribute_auc: dict
    privacy_gain: dict
    suppression_rate: dict
    timings_ms: dict
    baseline_rank1: float = 0.0
    baseline_accuracy: dict = field(default_factory=dict)
    baseline_auc: dict = field(default_factory=dict)
    chance: dict = field(default_factory=dict)
    eer: float | None = None
    protection_chain: tuple = ()

    def __post_init__(self) -> None:
        for m in (self.attribute_accuracy, self.attribute_auc,
                  self.baseline_accuracy):
            for k, v in m.items():
                if not 0.0 <= v <= 1.0:
                    raise RangeViolationError(f"{k}={v} outside [0, 1]")
        for attr, pg in self.privacy_gain.items():
            want = self.baseline_accuracy[attr] - self.attribute_accuracy[attr]
            if abs(pg - want) > 1e-9:
                raise RangeViolationError(f"stored PG for {attr} breaks the identity")

    def to_dict(self) -> dict:
        return {
            "rank1_accuracy": self.rank1_accuracy,
            "attribute_accuracy": dict(self.attribute_accuracy),
            "attribute_auc": dict(self.attribute_auc),
            "privacy_gain": dict(self.privacy_gain),
            "suppression_rate": dict(self.suppression_rate),
            "timings_ms": dict(self.timings_ms),
            "baseline_rank1": self.baseline_rank1,
            "baseline_accuracy": dict(self.baseline_accuracy),
            "baseline_auc": dict(self.baseline_auc),
            "chance": dict(self.chance),
            "eer": self.eer,
            "protection_chain": list(self.protection_chain),
        }


def fmr_fnmr_curve(scores, n_thresholds: int = 200):
    """Threshold sweep over match scores.

    Returns (rows, eer, trade_area): rows are (threshold, FMR, FNMR) with
    FMR = fraction of impostor scores >= t and FNMR = fraction of genuine
    scores < t; eer is the crossing point; trade_area integrates FNMR over
    FMR along the sweep.
    """
    genuine = np.array([s.value for s in scores if s.kind == "genuine"])
    impostor = np.array([s.value for s in scores if s.kind == "impostor"])
    if genuine.size == 0 or impostor.size == 0:
        raise MissingClassError("need both genuine and impostor scores")
    lo = min(genuine.min(), impostor.min())
    hi = max(genuine.max(), impostor.max())
    pad = 1e-9 + (hi - lo) * 1e-6
    ts = np.linspace(lo - pad, hi + pad, n_thresholds)
    fmr = np.array([(impostor >= t).mean() for t in ts])
    fnmr = np.array([(genuine < t).mean() for t in ts])
    k = int(np.argmin(np.abs(fmr - fnmr)))
    eer = float((fmr[k] + fnmr[k]) / 2)
    order = np.argsort(fmr)
    trade_area = float(np.trapezoid(fnmr[order], fmr[order]))
    rows = [(float(t), float(a), float(b)) for t, a, b in zip(ts, fmr, fnmr)]
    return rows, eer, trade_area
