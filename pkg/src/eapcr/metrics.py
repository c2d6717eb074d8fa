"""Classification and regression metrics.

Everything classification-side derives from one confusion matrix. Binary
tasks report the positive class (id 1); multiclass tasks report macro
averages. Zero-denominator precision/recall/F1 define to 0. Regression R^2
with zero target variance defines to 1 when residuals vanish too, else 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise DataError(f"label vectors disagree: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise DataError("cannot score an empty prediction set")
    if ((t < 0) | (t >= n_classes) | (p < 0) | (p >= n_classes)).any():
        raise DataError(f"labels outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n": self.n,
        }

    @property
    def primary(self) -> float:
        return self.accuracy


@dataclass(frozen=True)
class RegressionMetrics:
    mae: float
    mse: float
    rmse: float
    r2: float
    n: int

    def to_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse, "r2": self.r2, "n": self.n}

    @property
    def primary(self) -> float:
        return self.r2


def classification_metrics(y_true, y_pred, n_classes: int) -> ClassificationMetrics:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    n = int(cm.sum())
    accuracy = float(np.trace(cm)) / n
    if n_classes == 2:
        tp, fp, fn = cm[1, 1], cm[0, 1], cm[1, 0]
        precision, recall, f1 = _prf(float(tp), float(fp), float(fn))
    else:
        ps, rs, fs = [], [], []
        for c in range(n_classes):
            tp = float(cm[c, c])
            fp = float(cm[:, c].sum() - cm[c, c])
            fn = float(cm[c, :].sum() - cm[c, c])
            p, r, f = _prf(tp, fp, fn)
            ps.append(p)
            rs.append(r)
            fs.append(f)
        precision, recall, f1 = float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs))
    return ClassificationMetrics(accuracy, precision, recall, f1, n)


def regression_metrics(y_true, y_pred) -> RegressionMetrics:
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise DataError(f"target vectors disagree: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise DataError("cannot score an empty prediction set")
    err = p - t
    mae = float(np.abs(err).mean())
    mse = float((err * err).mean())
    rmse = float(np.sqrt(mse))
    ss_res = float((err * err).sum())
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RegressionMetrics(mae, mse, rmse, float(r2), t.size)
