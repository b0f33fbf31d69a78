"""Four retrainable softmax classifiers over claim features.

One model per query property kind (relation, key value, attribute, formula
template).  Multinomial logistic regression trained by full-batch gradient
descent; multi-label ground truth is expanded by callers into one example per
true label, and an answer counts as correct when it lands in the truth set.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse

KINDS = ("relation", "key_value", "attribute", "formula")

Matrix = Union[np.ndarray, sparse.spmatrix]


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class PropertyDistribution:
    """Ranked (label, probability) list for one property kind."""

    kind: str
    entries: tuple[tuple[str, float], ...]  # descending probability

    def top(self, k: int) -> tuple[tuple[str, float], ...]:
        return self.entries[:k]

    def prob(self, label: str) -> float:
        for name, p in self.entries:
            if name == label:
                return p
        return 0.0

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)

    def entropy(self) -> float:
        return float(-sum(p * math.log(p) for _, p in self.entries if p > 0.0))

    def __len__(self) -> int:
        return len(self.entries)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _as_2d(features: np.ndarray) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float32)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


class SoftmaxClassifier:
    """Linear softmax model; deterministic (zero init, fixed epoch budget)."""

    def __init__(self, kind: str, labels: Sequence[str],
                 weights: np.ndarray, bias: np.ndarray):
        self.kind = kind
        self.labels = tuple(labels)
        self.weights = weights  # (width, n_labels) float32
        self.bias = bias  # (n_labels,) float32

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def fit(cls, kind: str, X: Matrix, labels: Sequence[str],
            epochs: int = 200, learning_rate: float = 0.1, l2: float = 1e-4,
            warm_start: Optional["SoftmaxClassifier"] = None) -> "SoftmaxClassifier":
        n = X.shape[0]
        if n == 0 or len(labels) != n:
            raise ClassifierError("need one label per training row, at least one row")
        label_space = sorted(set(labels))
        index = {name: i for i, name in enumerate(label_space)}
        width = X.shape[1]
        W = np.zeros((width, len(label_space)), dtype=np.float32)
        b = np.zeros(len(label_space), dtype=np.float32)
        if warm_start is not None and warm_start.width == width:
            # carry over columns for labels that already existed
            for j, name in enumerate(warm_start.labels):
                at = index.get(name)
                if at is not None:
                    W[:, at] = warm_start.weights[:, j]
                    b[at] = warm_start.bias[j]

        if sparse.issparse(X):
            X = X.tocsr().astype(np.float32)
            Xt = X.T.tocsr()
        else:
            X = np.asarray(X, dtype=np.float32)
            Xt = X.T
        y = np.array([index[l] for l in labels], dtype=np.int64)
        onehot_rows = np.arange(n)
        for _ in range(max(epochs, 0)):
            probs = _softmax(np.asarray(X @ W + b, dtype=np.float32))
            probs[onehot_rows, y] -= 1.0
            probs /= n
            grad_w = np.asarray(Xt @ probs, dtype=np.float32)
            if l2:
                grad_w += l2 * W
            W -= learning_rate * grad_w
            b -= learning_rate * probs.sum(axis=0)
        return cls(kind, label_space, W, b)

    def proba_matrix(self, X: Matrix) -> np.ndarray:
        if X.shape[1] != self.width:
            raise ClassifierError(
                f"feature width {X.shape[1]} does not match model width {self.width}")
        return _softmax(np.asarray(X @ self.weights + self.bias, dtype=np.float32))

    def distribution(self, features: np.ndarray) -> PropertyDistribution:
        probs = self.proba_matrix(_as_2d(features))[0]
        order = sorted(range(len(self.labels)), key=lambda i: (-probs[i], self.labels[i]))
        return PropertyDistribution(
            self.kind, tuple((self.labels[i], float(probs[i])) for i in order))

    def entropy(self, features: np.ndarray) -> float:
        probs = self.proba_matrix(_as_2d(features))[0]
        nonzero = probs[probs > 0.0]
        return float(-(nonzero * np.log(nonzero)).sum())


def train(examples: Sequence[tuple[np.ndarray, str]], kind: str,
          epochs: int = 200, learning_rate: float = 0.1,
          l2: float = 1e-4) -> SoftmaxClassifier:
    if not examples:
        raise ClassifierError("empty training set")
    X = np.vstack([_as_2d(vec) for vec, _ in examples])
    labels = [label for _, label in examples]
    return SoftmaxClassifier.fit(kind, X, labels, epochs, learning_rate, l2)


def predict_topk(model: SoftmaxClassifier, features: np.ndarray,
                 k: int) -> PropertyDistribution:
    if k < 1:
        raise ClassifierError("k must be at least 1")
    full = model.distribution(features)
    return PropertyDistribution(full.kind, full.top(k))


def entropy(model: SoftmaxClassifier, features: np.ndarray) -> float:
    return model.entropy(features)


# ---------------------------------------------------------------------------
# Accuracy helpers (Fig. 7/8-style curves)


def top1_accuracy(model: Optional[SoftmaxClassifier], X: Matrix,
                  truth_sets: Sequence[Iterable[str]]) -> float:
    return topk_accuracy(model, X, truth_sets, 1)


def topk_accuracy(model: Optional[SoftmaxClassifier], X: Matrix,
                  truth_sets: Sequence[Iterable[str]], k: int) -> float:
    """Fraction of rows whose top-k predictions hit the truth set."""
    if not len(truth_sets):
        return 0.0
    if model is None:
        return 0.0
    probs = model.proba_matrix(X)
    hits = 0
    labels = model.labels
    for row, truth in zip(probs, truth_sets):
        truth_set = set(truth)
        order = sorted(range(len(labels)), key=lambda i: (-row[i], labels[i]))[:k]
        if any(labels[i] in truth_set for i in order):
            hits += 1
    return hits / len(truth_sets)


# ---------------------------------------------------------------------------
# Model set


class ModelSet:
    """One model per property kind plus the cumulative training examples.

    Retraining refits every kind on its cumulative example set; an empty
    delta leaves models and fingerprint untouched.  With
    ``incremental_epochs`` set, refits after the first warm-start from the
    previous weights at the reduced epoch budget (a speed knob for large
    simulations; the default always runs the full budget from zero).
    """

    def __init__(self, epochs: int = 200, learning_rate: float = 0.1,
                 l2: float = 1e-4, incremental_epochs: Optional[int] = None):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.l2 = l2
        self.incremental_epochs = incremental_epochs
        self.models: dict[str, Optional[SoftmaxClassifier]] = {k: None for k in KINDS}
        self._blocks: dict[str, list[tuple[Matrix, list[str]]]] = {k: [] for k in KINDS}
        self._hash = hashlib.sha256()
        self.fingerprint = self._hash.hexdigest()

    def example_count(self, kind: str) -> int:
        return sum(len(labels) for _, labels in self._blocks[kind])

    def add_examples(self, kind: str, X: Matrix, labels: Sequence[str]) -> int:
        """Queue a block of training rows; returns the new cumulative count."""
        if kind not in self._blocks:
            raise ClassifierError(f"unknown property kind {kind!r}")
        if X.shape[0] != len(labels):
            raise ClassifierError("row/label count mismatch")
        if len(labels) == 0:
            return self.example_count(kind)
        self._blocks[kind].append((X, list(labels)))
        self._hash.update(kind.encode())
        for label in labels:
            self._hash.update(label.encode("utf-8", "replace"))
        data = X.data if sparse.issparse(X) else np.ascontiguousarray(X)
        self._hash.update(np.asarray(data, dtype=np.float32).tobytes())
        self.fingerprint = self._hash.hexdigest()
        return self.example_count(kind)

    def refit(self, kinds: Optional[Iterable[str]] = None) -> None:
        for kind in (kinds if kinds is not None else KINDS):
            blocks = self._blocks[kind]
            if not blocks:
                continue
            X = _stack([b[0] for b in blocks])
            labels = [l for _, ls in blocks for l in ls]
            previous = self.models[kind]
            if previous is not None and self.incremental_epochs is not None:
                self.models[kind] = SoftmaxClassifier.fit(
                    kind, X, labels, self.incremental_epochs,
                    self.learning_rate, self.l2, warm_start=previous)
            else:
                self.models[kind] = SoftmaxClassifier.fit(
                    kind, X, labels, self.epochs, self.learning_rate, self.l2)

    def utility(self, features: np.ndarray) -> float:
        """Training utility u(c): summed prediction entropy across kinds."""
        total = 0.0
        for model in self.models.values():
            if model is not None:
                total += model.entropy(features)
        return total

    def distribution(self, kind: str, features: np.ndarray) -> PropertyDistribution:
        model = self.models.get(kind)
        if model is None:
            return PropertyDistribution(kind, ())
        return model.distribution(features)

    def save(self, path: Path | str) -> None:
        arrays: dict[str, np.ndarray] = {}
        meta: dict[str, object] = {"version": 1, "fingerprint": self.fingerprint,
                                   "kinds": {}}
        for kind, model in self.models.items():
            if model is None:
                continue
            arrays[f"{kind}__weights"] = model.weights
            arrays[f"{kind}__bias"] = model.bias
            meta["kinds"][kind] = list(model.labels)  # type: ignore[index]
        arrays["__meta__"] = np.frombuffer(
            json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path: Path | str) -> "ModelSet":
        with np.load(path) as bundle:
            meta = json.loads(bytes(bundle["__meta__"]).decode("utf-8"))
            if meta.get("version") != 1:
                raise ClassifierError(f"unsupported checkpoint version {meta.get('version')}")
            model_set = cls()
            model_set.fingerprint = meta["fingerprint"]
            for kind, labels in meta["kinds"].items():
                model_set.models[kind] = SoftmaxClassifier(
                    kind, labels, bundle[f"{kind}__weights"], bundle[f"{kind}__bias"])
        return model_set


def _stack(blocks: list[Matrix]) -> Matrix:
    if len(blocks) == 1:
        return blocks[0]
    if any(sparse.issparse(b) for b in blocks):
        return sparse.vstack([sparse.csr_matrix(b) for b in blocks], format="csr")
    return np.vstack(blocks)


def retrain(model_set: ModelSet,
            new_examples: Mapping[str, Sequence[tuple[np.ndarray, str]]]) -> ModelSet:
    """Fold labeled examples in and refit the touched kinds (cumulative)."""
    touched = []
    for kind, examples in new_examples.items():
        if not examples:
            continue
        X = np.vstack([_as_2d(vec) for vec, _ in examples])
        model_set.add_examples(kind, X, [label for _, label in examples])
        touched.append(kind)
    if touched:
        model_set.refit(touched)
    return model_set
