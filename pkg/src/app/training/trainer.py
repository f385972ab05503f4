import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.app.errors import DataError, NumericError
from src.app.hr.pipeline import HrWindow
from src.app.model.hrvconformer import HRVConformer
from src.app.nn import functional as F
from src.app.nn.optim import AdamW, LrSchedule, cosine_warmup
from src.app.nn.tensor import Tensor
from src.app.schemas import TrainConfig
from src.app.training.evaluation import (
    epoch_aggregate,
    group_predictions,
    moving_average,
    predict_logits,
    roc_auc,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

HISTORY_COLUMNS = [
    "eval", "epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc",
    "val_window_auc", "val_epoch_auc", "score", "score_ma",
]


@dataclass
class BestCheckpoint:
    state: Dict[str, np.ndarray]
    epoch: int
    eval_index: int
    score_ma: float
    meta: dict = field(default_factory=dict)


def _stack(ws: Sequence[HrWindow], dtype) -> Tuple[np.ndarray, np.ndarray]:
    return np.stack([w.values for w in ws]).astype(dtype), np.array([w.label for w in ws], dtype=np.int64)


def _check_splits(train_ws: Sequence[HrWindow], val_ws: Sequence[HrWindow]) -> None:
    if not train_ws:
        raise DataError("training split is empty")
    if not val_ws:
        raise DataError("validation split is empty")
    shared = {w.epoch_id for w in train_ws} & {w.epoch_id for w in val_ws}
    if shared:
        raise DataError(f"train and validation share epochs: {sorted(shared)[:5]}")


def _val_loss(logits: np.ndarray, y: np.ndarray) -> float:
    return float(F.cross_entropy(Tensor(logits), y).data)


def train(model: HRVConformer, train_ws: Sequence[HrWindow], val_ws: Sequence[HrWindow],
          tc: Optional[TrainConfig] = None) -> Tuple[BestCheckpoint, pd.DataFrame]:
    """
    Fit ``model`` with AdamW, a cosine-warmup schedule and label-smoothed cross-entropy.

    Model selection tracks the trailing ``ma_window`` mean of the epoch-level validation AUC
    (negative validation loss while the AUC is undefined). Training stops once that mean has
    not improved for ``patience`` epochs; the best state is loaded back into ``model``.
    """
    tc = tc or TrainConfig()
    _check_splits(train_ws, val_ws)
    dtype = np.float32 if tc.dtype == 'float32' else np.float64
    model.astype(dtype)
    x_train, y_train = _stack(train_ws, dtype)
    x_val, y_val = _stack(val_ws, dtype)
    if len(set(y_val.tolist())) < 2:
        logger.warning("Validation split holds a single class; model selection falls back to validation loss")

    optimizer = AdamW(model.named_parameters(), tc.beta1, tc.beta2, tc.weight_decay)
    schedule = LrSchedule(tc.warmup_epochs, tc.lr_max, tc.lr_min, tc.epochs)
    rng = np.random.default_rng(tc.seed)

    rows: List[dict] = []
    scores: List[float] = []
    best: Optional[BestCheckpoint] = None
    since_best = 0
    logger.info(f"Training on {len(x_train)} windows, validating on {len(x_val)} windows for up to {tc.epochs} epochs")

    for epoch in range(tc.epochs):
        lr = cosine_warmup(epoch, schedule)
        model.train()
        order = rng.permutation(len(x_train))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(order), tc.batch_size):
            idx = order[start:start + tc.batch_size]
            optimizer.zero_grad()
            logits = model(x_train[idx]).logits
            loss = F.cross_entropy(logits, y_train[idx], tc.label_smoothing)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            optimizer.step(lr)
            loss_sum += value * len(idx)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == y_train[idx]))

        if (epoch + 1) % tc.eval_every and epoch != tc.epochs - 1:
            continue

        # - - - - EVALUATION - - - -
        val_logits = predict_logits(model, x_val, tc.batch_size)
        shifted = np.exp(val_logits - val_logits.max(axis=1, keepdims=True))
        probs = shifted[:, 1] / shifted.sum(axis=1)
        val_loss = _val_loss(val_logits, y_val)
        groups, epoch_labels = group_predictions(val_ws, probs)
        aggregated = epoch_aggregate(groups, tc.tie_label)
        epochs_sorted = sorted(aggregated)
        truth = [epoch_labels[e] for e in epochs_sorted]
        try:
            window_auc = roc_auc(y_val, probs)
            epoch_auc = roc_auc(truth, [aggregated[e][1] for e in epochs_sorted])
        except DataError:
            window_auc = epoch_auc = None

        score = epoch_auc if epoch_auc is not None else -val_loss
        scores.append(score)
        score_ma = float(moving_average(scores, tc.ma_window)[-1])
        rows.append({
            "eval": len(rows),
            "epoch": epoch,
            "lr": lr,
            "train_loss": loss_sum / len(x_train),
            "train_acc": correct / len(x_train),
            "val_loss": val_loss,
            "val_acc": float(np.mean((probs >= 0.5).astype(int) == y_val)),
            "val_window_auc": window_auc,
            "val_epoch_auc": epoch_auc,
            "score": score,
            "score_ma": score_ma,
        })

        if best is None or score_ma > best.score_ma:
            best = BestCheckpoint(state=model.state_dict(), epoch=epoch, eval_index=len(rows) - 1, score_ma=score_ma)
            since_best = 0
        else:
            since_best += tc.eval_every

        if epoch % 10 == 0 or epoch == tc.epochs - 1:
            row = rows[-1]
            logger.info(
                f"epoch {epoch}: lr={lr:.2e} train_loss={row['train_loss']:.4f} train_acc={row['train_acc']:.3f} "
                f"val_loss={val_loss:.4f} val_epoch_auc={epoch_auc} score_ma={score_ma:.4f}"
            )
        if since_best >= tc.patience:
            logger.info(f"Early stop at epoch {epoch}: no improvement since epoch {best.epoch}")
            break

    model.load_state_dict(best.state)
    best.meta = {"best_epoch": best.epoch, "best_score_ma": best.score_ma, "epochs_run": rows[-1]["epoch"] + 1}
    logger.info(f"Restored best state from epoch {best.epoch} (moving-average score {best.score_ma:.4f})")
    return best, pd.DataFrame(rows, columns=HISTORY_COLUMNS)
