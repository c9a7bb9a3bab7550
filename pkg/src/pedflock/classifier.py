"""
Pair scoring: balanced dataset construction, a standardized logistic
baseline trained by full-batch gradient descent, evaluation, confidence
thresholding and import of scores produced by an external model.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from pedflock.pairfeat import ANGLE_AGGREGATION, DTW_CONVENTION, FEATURE_NAMES, PairFeatures, PairRecord

log = logging.getLogger(__name__)

MODEL_SCHEMA = "pedflock-model/1"
STD_FLOOR = 1e-9
DEFAULT_LR = 0.1


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPair:
    features: np.ndarray
    label: int
    bin_index: int = -1
    pid_a: int = -1
    pid_b: int = -1

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class PairScore:
    bin_index: int
    pid_a: int
    pid_b: int
    probability: float

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        if self.pid_a >= self.pid_b:
            raise ValueError("pid_a must be smaller than pid_b")


def _as_matrix(pairs: Sequence[LabeledPair]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.array([p.features for p in pairs], dtype=float).reshape(-1, len(FEATURE_NAMES))
    y = np.array([p.label for p in pairs], dtype=float)
    return X, y


def build_training_set(records: Iterable[PairRecord], annotation_pairs: set, seed: int) -> List[LabeledPair]:
    """Every annotated within-bin pair plus an equal number of random non-pairs.

    Negatives are drawn uniformly without replacement from the non-annotated
    within-bin pairs; if there are fewer of those than positives, all are used.
    """
    records = list(records)
    pos = [r for r in records if (r.pid_a, r.pid_b) in annotation_pairs]
    neg = [r for r in records if (r.pid_a, r.pid_b) not in annotation_pairs]
    if not pos:
        raise TrainingError("no annotated pairs among the candidate pairs; cannot train")
    rng = np.random.default_rng(seed)
    k = min(len(pos), len(neg))
    if k < len(pos):
        log.warning("only %d negatives available for %d positives", k, len(pos))
    chosen = sorted(rng.choice(len(neg), size=k, replace=False)) if k else []
    out = [LabeledPair(r.features.as_array(), 1, r.bin_index, r.pid_a, r.pid_b) for r in pos]
    out += [LabeledPair(neg[i].features.as_array(), 0, neg[i].bin_index, neg[i].pid_a, neg[i].pid_b) for i in chosen]
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def _stratified_take(labels: np.ndarray, fraction: float, rng) -> np.ndarray:
    """Indices of a class-stratified subset holding round(fraction * n) items.

    Per-class quotas use largest remainders so each class is within one
    sample of its exact share.
    """
    n = len(labels)
    target = int(math.floor(fraction * n + 0.5))
    classes = [1, 0]
    members = {c: rng.permutation(np.flatnonzero(labels == c)) for c in classes}
    exact = {c: fraction * len(members[c]) for c in classes}
    quota = {c: int(math.floor(exact[c])) for c in classes}
    spare = target - sum(quota.values())
    for c in sorted(classes, key=lambda c: -(exact[c] - quota[c])):
        if spare <= 0:
            break
        if quota[c] < len(members[c]):
            quota[c] += 1
            spare -= 1
    return np.concatenate([members[c][: quota[c]] for c in classes]).astype(int)


def split_train_test(pairs: Sequence[LabeledPair], ratio: float = 0.8, seed: int = 0):
    """Stratified, seeded split into (train, test)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    rng = np.random.default_rng(seed)
    labels = np.array([p.label for p in pairs])
    train_idx = _stratified_take(labels, ratio, rng)
    in_train = np.zeros(len(pairs), dtype=bool)
    in_train[train_idx] = True
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(np.flatnonzero(~in_train))
    return [pairs[i] for i in train_idx], [pairs[i] for i in test_idx]


def fit_standardizer(X) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("need a non-empty 2-D feature matrix")
    return X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR)


def standardize(X, means, stds) -> np.ndarray:
    return (np.asarray(X, dtype=float) - means) / stds


def transform(X) -> np.ndarray:
    """log1p compression applied before standardisation (all features are >= 0)."""
    return np.log1p(np.asarray(X, dtype=float))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def cross_entropy(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy; ``params`` is weights followed by bias."""
    z = X @ params[:-1] + params[-1]
    # log(1 + e^z) - y z, written to stay finite for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def cross_entropy_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = X @ params[:-1] + params[-1]
    r = sigmoid(z) - y
    return np.append(X.T @ r / len(y), r.mean())


@dataclass(frozen=True)
class PairScoreModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.asarray(self.feature_stds) <= 0):
            raise ValueError("feature_stds must be strictly positive")

    def to_json(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "feature_names": list(FEATURE_NAMES),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "feature_means": [float(m) for m in self.feature_means],
            "feature_stds": [float(s) for s in self.feature_stds],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PairScoreModel":
        if doc.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"unsupported model schema {doc.get('schema')!r}")
        if list(doc["feature_names"]) != list(FEATURE_NAMES):
            raise ValueError("model was trained on a different feature layout")
        return cls(
            np.array(doc["weights"], dtype=float),
            float(doc["bias"]),
            np.array(doc["feature_means"], dtype=float),
            np.array(doc["feature_stds"], dtype=float),
            dict(doc.get("metadata", {})),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PairScoreModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def feature_metadata(rate_hz: float, seq_len: int) -> dict:
    return {
        "rate_hz": rate_hz,
        "seq_len": seq_len,
        "dtw": DTW_CONVENTION,
        "angle_aggregation": ANGLE_AGGREGATION,
    }


def fit_logistic(
    Z: np.ndarray,
    y: np.ndarray,
    lr: float = DEFAULT_LR,
    max_epochs: int = 1000,
    patience: int = 25,
    seed: int = 0,
    val_fraction: float = 0.1,
    min_delta: float = 1e-6,
) -> Tuple[np.ndarray, dict]:
    """Full-batch gradient descent on mean cross-entropy from a zero start.

    Returns ``(params, info)`` with params = weights followed by bias.
    A stratified ``val_fraction`` of the rows is held out for early
    stopping and the parameters with the lowest validation loss are kept.
    When the hold-out would be empty or would leave a class unrepresented
    in the fitting part, all ``max_epochs`` run on every row instead.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim != 2 or len(Z) != len(y) or len(y) == 0:
        raise ValueError("Z must be (n, d) with one label per row")
    if len(set(y.tolist())) < 2:
        raise TrainingError("training data must contain both classes")
    rng = np.random.default_rng(seed)
    val_idx = _stratified_take(y, val_fraction, rng) if val_fraction > 0 else np.array([], dtype=int)
    fit_mask = np.ones(len(y), dtype=bool)
    fit_mask[val_idx] = False
    use_val = len(val_idx) > 0 and len(set(y[fit_mask].tolist())) == 2
    if use_val:
        Zf, yf, Zv, yv = Z[fit_mask], y[fit_mask], Z[val_idx], y[val_idx]
    else:
        Zf, yf = Z, y

    params = np.zeros(Z.shape[1] + 1)
    best = params.copy()
    best_loss = cross_entropy(params, Zv, yv) if use_val else math.inf
    best_epoch, stale, epochs = 0, 0, 0
    initial_loss = cross_entropy(params, Zf, yf)
    for epoch in range(1, max_epochs + 1):
        params = params - lr * cross_entropy_grad(params, Zf, yf)
        epochs = epoch
        if not use_val:
            continue
        loss = cross_entropy(params, Zv, yv)
        if loss < best_loss - min_delta:
            best_loss, best, best_epoch, stale = loss, params.copy(), epoch, 0
        else:
            stale += 1
            if stale >= patience:
                break
    if not use_val:
        best, best_epoch = params, epochs
    info = dict(epochs_run=epochs, best_epoch=best_epoch, early_stopping=use_val,
                initial_train_loss=initial_loss, final_train_loss=cross_entropy(best, Zf, yf))
    return best, info


def train_logistic(
    train: Sequence[LabeledPair],
    lr: float = DEFAULT_LR,
    max_epochs: int = 1000,
    patience: int = 25,
    seed: int = 0,
    val_fraction: float = 0.1,
    min_delta: float = 1e-6,
    metadata: Optional[dict] = None,
) -> PairScoreModel:
    """Logistic pair scorer fitted with :func:`fit_logistic`.

    Features go through :func:`transform` and are standardised with
    statistics of ``train`` before fitting.
    """
    X, y = _as_matrix(train)
    X = transform(X)
    if len(set(y.tolist())) < 2:
        raise TrainingError("training data must contain both classes")
    means, stds = fit_standardizer(X)
    params, info = fit_logistic(standardize(X, means, stds), y, lr=lr, max_epochs=max_epochs,
                                patience=patience, seed=seed, val_fraction=val_fraction, min_delta=min_delta)
    meta = dict(metadata or {})
    meta.update(
        feature_transform="log1p", seed=seed, lr=lr, max_epochs=max_epochs, patience=patience,
        val_fraction=val_fraction, min_delta=min_delta, **info,
    )
    return PairScoreModel(params[:-1].copy(), float(params[-1]), means, stds, meta)


def predict_prob(model: PairScoreModel, features) -> np.ndarray | float:
    """Probability that two agents walk together, for one vector or a matrix of rows."""
    if isinstance(features, PairFeatures):
        features = features.as_array()
    x = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value")
    p = sigmoid(standardize(transform(x), model.feature_means, model.feature_stds) @ model.weights + model.bias)
    return float(p) if p.ndim == 0 else p


def evaluate(model: PairScoreModel, test: Sequence[LabeledPair]) -> dict:
    """Accuracy, precision, recall and F1 at threshold 0.5 (a tie predicts 0)."""
    if not test:
        raise ValueError("empty test set")
    X, y = _as_matrix(test)
    pred = (np.atleast_1d(predict_prob(model, X)) > 0.5).astype(float)
    tp = float(np.sum((pred == 1) & (y == 1)))
    fp = float(np.sum((pred == 1) & (y == 0)))
    fn = float(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": float(np.mean(pred == y)),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "n": len(y),
    }


def score_pairs(model: PairScoreModel, records: Sequence[PairRecord]) -> List[PairScore]:
    if not records:
        return []
    X = np.array([r.features.as_array() for r in records])
    probs = np.atleast_1d(predict_prob(model, X))
    return [PairScore(r.bin_index, r.pid_a, r.pid_b, float(p)) for r, p in zip(records, probs)]


def threshold_pairs(scores: Iterable[PairScore], tau: float = 0.9) -> List[PairScore]:
    """Scores at or above ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    return [s for s in scores if s.probability >= tau]


def import_external_scores(source) -> List[PairScore]:
    """Read ``bin_index,pid_a,pid_b,probability`` rows written by any model.

    Pid order is canonicalised. Rows that do not parse, pair a pedestrian
    with itself, or carry a probability outside [0, 1] are dropped with a
    warning. A header row and ``#`` comment lines are ignored.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh = open(source, encoding="utf-8", newline="")
        owned = True
    else:
        fh, owned = source, False
    out = []
    try:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#") or row[0].strip() == "bin_index":
                continue
            try:
                b, a, c = int(row[0]), int(row[1]), int(row[2])
                p = float(row[3])
                if len(row) != 4:
                    raise ValueError("expected 4 fields")
            except (ValueError, IndexError):
                log.warning("scores line %d: unparseable row skipped", lineno)
                continue
            if not (0.0 <= p <= 1.0) or a == c:
                log.warning("scores line %d: invalid probability or self-pair, rejected", lineno)
                continue
            out.append(PairScore(b, min(a, c), max(a, c), p))
    finally:
        if owned:
            fh.close()
    return out
