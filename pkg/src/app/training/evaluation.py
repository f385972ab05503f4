import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax
from scipy.stats import rankdata

from src.app.errors import DataError
from src.app.hr.pipeline import HrWindow
from src.app.model.hrvconformer import HRVConformer
from src.app.nn.tensor import no_grad

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


# ------------------- INFERENCE -------------------

def predict_logits(model: HRVConformer, values: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Logits for a (N, window) array, computed batch by batch in inference mode."""
    values = np.asarray(values)
    if len(values) == 0:
        return np.zeros((0, model.cfg.n_classes))
    was_training = model.training
    model.eval()
    chunks = []
    try:
        with no_grad():
            for start in range(0, len(values), batch_size):
                chunks.append(model(values[start:start + batch_size]).logits.data)
    finally:
        model.train(was_training)
    return np.concatenate(chunks, axis=0)


def predict_windows(model: HRVConformer, ws: Sequence[HrWindow], batch_size: int = 64) -> np.ndarray:
    """Class-1 softmax probability per window."""
    if not ws:
        return np.zeros(0)
    logits = predict_logits(model, np.stack([w.values for w in ws]), batch_size)
    return softmax(logits, axis=1)[:, 1]


# ------------------- AGGREGATION -------------------

def epoch_aggregate(groups: Mapping[str, Sequence[float]], tie_label: int = 1,
                    threshold: float = 0.5) -> Dict[str, Tuple[int, float]]:
    """
    Majority vote of thresholded window predictions plus mean probability, per epoch.

    A tied vote goes to ``tie_label``.
    """
    result: Dict[str, Tuple[int, float]] = {}
    for epoch, probs in groups.items():
        probs = np.asarray(probs, dtype=np.float64)
        if probs.size == 0:
            raise DataError(f"epoch {epoch} has no window predictions")
        votes = int(np.sum(probs >= threshold))
        rest = probs.size - votes
        if votes == rest:
            logger.warning(f"Vote tie in epoch {epoch} ({votes} vs {rest}); assigning class {tie_label}")
            label = tie_label
        else:
            label = int(votes > rest)
        result[epoch] = (label, float(probs.mean()))
    return result


def group_predictions(ws: Sequence[HrWindow], probs: np.ndarray) -> Tuple[Dict[str, List[float]], Dict[str, int]]:
    groups: Dict[str, List[float]] = {}
    labels: Dict[str, int] = {}
    for w, p in zip(ws, probs):
        groups.setdefault(w.epoch_id, []).append(float(p))
        labels[w.epoch_id] = w.label
    return groups, labels


# ------------------- METRICS -------------------

def roc_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    labels = np.asarray(labels).astype(int)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise DataError(f"labels {labels.shape} and scores {scores.shape} differ in shape")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def accuracy(labels: Sequence[int], preds: Sequence[int]) -> float:
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    if labels.size == 0:
        raise DataError("accuracy of an empty set")
    if labels.shape != preds.shape:
        raise DataError(f"labels {labels.shape} and predictions {preds.shape} differ in shape")
    return float(np.mean(labels == preds))


def ensemble_average(prob_lists: Sequence[Sequence[float]]) -> np.ndarray:
    """Average the probabilities of repeated runs over the same windows or epochs."""
    if not prob_lists:
        raise DataError("no runs to average")
    lengths = {len(p) for p in prob_lists}
    if len(lengths) != 1:
        raise DataError(f"runs disagree in length: {sorted(lengths)}")
    return np.mean(np.asarray(prob_lists, dtype=np.float64), axis=0)


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` values (fewer at the start)."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise DataError(f"moving average window must be >= 1, got {window}")
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _safe_auc(labels, scores, level: str) -> Optional[float]:
    try:
        return roc_auc(labels, scores)
    except DataError:
        logger.warning(f"{level}-level AUC undefined: only one class present")
        return None


def evaluate(model: HRVConformer, ws: Sequence[HrWindow], tie_label: int = 1, batch_size: int = 64) -> dict:
    """Window- and epoch-level accuracy and AUC."""
    if not ws:
        raise DataError("nothing to evaluate")
    probs = predict_windows(model, ws, batch_size)
    window_labels = np.array([w.label for w in ws])
    groups, epoch_labels = group_predictions(ws, probs)
    aggregated = epoch_aggregate(groups, tie_label)
    epochs = sorted(aggregated)
    truth = np.array([epoch_labels[e] for e in epochs])

    metrics = {
        "window_auc": _safe_auc(window_labels, probs, "window"),
        "epoch_auc": _safe_auc(truth, [aggregated[e][1] for e in epochs], "epoch"),
        "window_acc": accuracy(window_labels, (probs >= 0.5).astype(int)),
        "epoch_acc": accuracy(truth, np.array([aggregated[e][0] for e in epochs])),
        "n_windows": len(ws),
        "n_epochs": len(epochs),
    }
    logger.info(
        f"Evaluated {len(ws)} windows / {len(epochs)} epochs: "
        f"window acc={metrics['window_acc']:.4f}, epoch acc={metrics['epoch_acc']:.4f}, "
        f"epoch auc={metrics['epoch_auc']}"
    )
    return metrics
