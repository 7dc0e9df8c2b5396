"""Nearest-neighbour classification and accuracy assessment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, ShapeError
from .cube import LabelRaster


def knn_classify(train_x, train_y, test_x, k: int = 1, chunk: int = 256) -> np.ndarray:
    """Majority vote among the `k` nearest training samples.

    Distances are computed from explicit differences so that exactly equal
    distances compare equal; such ties go to the smaller training index, and
    vote ties go to the smaller class id.
    """
    train_x = np.asarray(train_x, dtype=float)
    test_x = np.asarray(test_x, dtype=float)
    train_y = np.asarray(train_y)
    if train_x.ndim == 1:
        train_x = train_x[:, None]
    if test_x.ndim == 1:
        test_x = test_x[:, None]
    if train_x.shape[0] == 0:
        raise DomainError("training set is empty")
    if train_y.shape != (train_x.shape[0],):
        raise ShapeError("one label per training sample required")
    if test_x.shape[1] != train_x.shape[1]:
        raise ShapeError(f"train has {train_x.shape[1]} features, test has {test_x.shape[1]}")
    if not 1 <= k <= train_x.shape[0]:
        raise DomainError(f"k must lie in [1, {train_x.shape[0]}], got {k}")

    classes, codes = np.unique(train_y, return_inverse=True)
    out = np.empty(test_x.shape[0], dtype=train_y.dtype)
    for start in range(0, test_x.shape[0], chunk):
        block = test_x[start:start + chunk]
        d2 = ((block[:, None, :] - train_x[None, :, :]) ** 2).sum(-1)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = np.zeros((block.shape[0], classes.size), dtype=int)
        np.add.at(votes, (np.arange(block.shape[0])[:, None], codes[nearest]), 1)
        out[start:start + chunk] = classes[np.argmax(votes, axis=1)]
    return out


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    kappa: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray
    classes: np.ndarray

    def to_rows(self) -> list[list[str]]:
        """CSV rows: summary metrics followed by the confusion matrix."""
        rows = [["metric", "value"],
                ["overall_accuracy", repr(float(self.overall_accuracy))],
                ["kappa", repr(float(self.kappa))]]
        for c, acc in zip(self.classes, self.per_class_accuracy):
            rows.append([f"class_{int(c)}_accuracy", repr(float(acc))])
        rows.append(["confusion"] + [f"pred_{int(c)}" for c in self.classes])
        for c, counts in zip(self.classes, self.confusion):
            rows.append([f"true_{int(c)}"] + [str(int(v)) for v in counts])
        return rows


def evaluate(pred, truth) -> EvalReport:
    """Confusion matrix, overall accuracy and Cohen's kappa.

    Entries whose truth is 0 (unlabeled) are ignored. Rows of the confusion
    matrix are true classes, columns predicted classes.
    """
    if isinstance(truth, LabelRaster):
        truth = truth.flat()
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"{pred.size} predictions for {truth.size} truth entries")
    keep = truth != 0
    if not np.any(keep):
        raise DomainError("truth contains no labeled entries")
    pred, truth = pred[keep], truth[keep]
    classes = np.unique(np.concatenate((truth, pred[pred != 0])))
    index = {c: i for i, c in enumerate(classes.tolist())}
    confusion = np.zeros((classes.size, classes.size), dtype=np.int64)
    for t, p in zip(truth.tolist(), pred.tolist()):
        if p in index:
            confusion[index[t], index[p]] += 1
    total = truth.size
    oa = np.trace(confusion) / total
    p_e = float(confusion.sum(1) @ confusion.sum(0)) / total ** 2
    kappa = 1.0 if p_e == 1.0 else (oa - p_e) / (1.0 - p_e)
    support = confusion.sum(1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    return EvalReport(float(oa), float(kappa), confusion, per_class, classes)
