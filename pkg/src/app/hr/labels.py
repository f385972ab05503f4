from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional

from src.app.errors import DataError

GRADES = ('normal', 'mild', 'moderate', 'severe', 'inactive')
CLASS_ZERO_GRADES = ('normal', 'mild')


def grade_to_class(grade: str) -> int:
    grade = grade.strip().lower()
    if grade not in GRADES:
        raise DataError(f"unknown grade '{grade}', expected one of {GRADES}")
    return 0 if grade in CLASS_ZERO_GRADES else 1


@dataclass(frozen=True)
class EpochAnnotation:
    epoch_hour: int
    label: int
    kind: Literal['strong', 'weak'] = 'strong'
    grade: Optional[str] = None
    recording: str = ""

    @classmethod
    def from_grade(cls, epoch_hour: int, grade: str, recording: str = "") -> "EpochAnnotation":
        return cls(epoch_hour=epoch_hour, label=grade_to_class(grade), kind='strong', grade=grade, recording=recording)

    @property
    def epoch_id(self) -> str:
        return epoch_id(self.recording, self.epoch_hour)


def epoch_id(recording: str, hour: int) -> str:
    return f"{recording}_h{hour:03d}"


def propagate_weak_labels(ann: Iterable[EpochAnnotation]) -> List[EpochAnnotation]:
    """
    Fill the hours between consecutive strong annotations that agree on the binary class.

    Returns the strong annotations together with the inferred weak ones, sorted by hour.
    Pairs that disagree leave the hours between them unlabelled.
    """
    strong = sorted((a for a in ann if a.kind == 'strong'), key=lambda a: a.epoch_hour)
    weak: List[EpochAnnotation] = []
    for left, right in zip(strong, strong[1:]):
        if left.label != right.label:
            continue
        for hour in range(left.epoch_hour + 1, right.epoch_hour):
            weak.append(EpochAnnotation(epoch_hour=hour, label=left.label, kind='weak', recording=left.recording))
    return sorted(strong + weak, key=lambda a: a.epoch_hour)
