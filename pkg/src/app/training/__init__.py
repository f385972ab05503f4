from src.app.training.evaluation import (
    accuracy,
    ensemble_average,
    epoch_aggregate,
    evaluate,
    group_predictions,
    moving_average,
    predict_logits,
    predict_windows,
    roc_auc,
)
from src.app.training.trainer import HISTORY_COLUMNS, BestCheckpoint, train
