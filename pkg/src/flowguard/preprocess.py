"""Robust scaling: centre on the per-column median, divide by the IQR."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMatrix, NonFiniteInput


@dataclass(frozen=True)
class ScalerParams:
    median: np.ndarray
    iqr: np.ndarray

    @property
    def dims(self) -> int:
        return self.median.shape[0]

    @property
    def divisor(self) -> np.ndarray:
        # zero IQR keeps centring but not scaling
        return np.where(self.iqr > 0, self.iqr, 1.0)

    def to_dict(self) -> dict:
        return {"median": [float(x) for x in self.median], "iqr": [float(x) for x in self.iqr]}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        median = np.asarray(d["median"], dtype=float)
        iqr = np.asarray(d["iqr"], dtype=float)
        if median.shape != iqr.shape or median.ndim != 1:
            raise DimensionMismatch("median and iqr must be equal-length vectors")
        return cls(median, iqr)


def fit(rows) -> ScalerParams:
    """Per-column median and IQR; a 1-D input is one row, as in transform."""
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1 and X.size:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("need at least one row to fit the scaler")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("scaler input contains NaN or inf")
    q1, med, q3 = np.percentile(X, [25, 50, 75], axis=0, method="linear")
    iqr = np.maximum(q3 - q1, 0.0)
    return ScalerParams(med, iqr)


def transform(params: ScalerParams, X) -> np.ndarray:
    """Scale one row (1-D) or a matrix of rows (2-D)."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != params.dims:
        raise DimensionMismatch(f"expected {params.dims} dims, got {X.shape[-1]}")
    return (X - params.median) / params.divisor


def fit_transform(rows) -> tuple[ScalerParams, np.ndarray]:
    params = fit(rows)
    return params, transform(params, rows)
