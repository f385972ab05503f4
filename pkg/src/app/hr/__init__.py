from src.app.hr.labels import EpochAnnotation, epoch_id, grade_to_class, propagate_weak_labels
from src.app.hr.normalizer import Normalizer, fit_normalizer, normalize
from src.app.hr.pipeline import (
    EpochWindows,
    HrSegment,
    HrWindow,
    availability_report,
    filter_epochs,
    group_by_epoch,
    make_windows,
    preprocess_epoch,
    reject_noisy,
    resample_4hz,
    split_epochs,
    split_on_gaps,
)
