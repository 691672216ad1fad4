"""Confusion matrix and per-class accuracy report laid out like a method-comparison table."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_NAMES = (
    "Ground segmentation accuracy",
    "Manmade structure segmentation accuracy",
    "Vegetation segmentation accuracy",
)


@dataclass
class EvalReport:
    confusion: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> np.ndarray:
        """Per-class recall; NaN for classes absent from the truth."""
        rows = self.confusion.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "accuracy": {name: (None if np.isnan(a) else float(a))
                         for name, a in zip(ROW_NAMES, self.accuracy)},
            "timings_s": dict(self.timings),
        }

    def render(self, label: str = "terrasim") -> str:
        total = sum(self.timings.values())
        lines = [f"{'':44s}{label}",
                 f"{'Creating training data manually':44s}0%",
                 f"{'Data processing time':44s}{total:.2f} s"]
        for name, a in zip(ROW_NAMES, self.accuracy):
            lines.append(f"{name:44s}{'n/a' if np.isnan(a) else f'{100 * a:.1f}%'}")
        return "\n".join(lines)


def evaluate(predicted, truth, timings=None) -> EvalReport:
    p = np.asarray(predicted, dtype=np.int64).ravel()
    t = np.asarray(truth, dtype=np.int64).ravel()
    if p.shape != t.shape:
        raise ValueError(f"predicted has {p.size} labels, truth has {t.size}")
    cm = np.zeros((3, 3), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return EvalReport(cm, dict(timings or {}))
