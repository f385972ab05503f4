from src.app.rr.correction import (
    CorrectedRrSeries,
    RrCategory,
    RrSeries,
    classify_interval,
    correct,
    correct_short,
    reconstruct_long,
    split_long_interval,
)
