"""Linear wait-time model: pickup distance -> ticks until pickup."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE = "distance"
_FIELDS = ("intercept", "slope", "feature", "n_samples")


class ModelError(ValueError):
    pass


class InsufficientDataError(ModelError):
    pass


class DegenerateDataError(ModelError):
    pass


class ModelSchemaError(ModelError):
    pass


@dataclass(frozen=True)
class WaitModel:
    intercept: float
    slope: float
    feature: str = FEATURE
    n_samples: int = 2

    def __post_init__(self):
        if self.feature != FEATURE:
            raise ModelSchemaError(f"unknown feature {self.feature!r}, expected {FEATURE!r}")
        if not (math.isfinite(self.intercept) and math.isfinite(self.slope)):
            raise ModelError("coefficients must be finite")
        if self.n_samples < 2:
            raise ModelError("a model needs at least 2 training samples")


def _columns(rows) -> tuple[np.ndarray, np.ndarray]:
    d = np.array([r.distance for r in rows], dtype=float)
    w = np.array([r.actual_wait for r in rows], dtype=float)
    return d, w


def fit(rows) -> WaitModel:
    """Least-squares line of ``actual_wait`` on ``distance``, in closed form."""
    if len(rows) < 2:
        raise InsufficientDataError(f"need at least 2 rows, got {len(rows)}")
    d, w = _columns(rows)
    dc = d - d.mean()
    sxx = float(dc @ dc)
    if sxx == 0.0:
        raise DegenerateDataError("all distances are identical")
    slope = float(dc @ (w - w.mean())) / sxx
    intercept = float(w.mean()) - slope * float(d.mean())
    return WaitModel(intercept, slope, FEATURE, len(rows))


def predict(model: WaitModel, distance: float) -> float:
    if not math.isfinite(distance):
        raise ValueError(f"distance must be finite, got {distance}")
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    return max(0.0, model.intercept + model.slope * distance)


def r_squared(model: WaitModel, rows) -> float:
    if len(rows) < 2:
        raise InsufficientDataError(f"need at least 2 rows, got {len(rows)}")
    d, w = _columns(rows)
    ss_tot = float(((w - w.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise DegenerateDataError("labels have zero variance")
    fitted = np.maximum(0.0, model.intercept + model.slope * d)
    ss_res = float(((w - fitted) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def save(model: WaitModel, path) -> None:
    payload = {
        "intercept": model.intercept,
        "slope": model.slope,
        "feature": model.feature,
        "n_samples": model.n_samples,
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load(path) -> WaitModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelSchemaError(f"{path}: not a model file ({exc})") from exc
    if not isinstance(payload, dict):
        raise ModelSchemaError(f"{path}: expected an object")
    for name in _FIELDS:
        if name not in payload:
            raise ModelSchemaError(f"{path}: missing field {name!r}")
    if payload["feature"] != FEATURE:
        raise ModelSchemaError(f"{path}: unknown feature {payload['feature']!r}")
    try:
        return WaitModel(
            float(payload["intercept"]), float(payload["slope"]), FEATURE, int(payload["n_samples"])
        )
    except (TypeError, ValueError) as exc:
        raise ModelSchemaError(f"{path}: {exc}") from exc
