"""Ordinary least squares with an intercept."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from fanwatch.core import DataError, Dataset

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearModel:
    coefficients: np.ndarray
    intercept: float
    column_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if coef.shape != (len(self.column_names),):
            raise DataError("one coefficient per column required")
        if not (np.all(np.isfinite(coef)) and np.isfinite(self.intercept)):
            raise DataError("non-finite model parameters")

    def predict(self, features) -> np.ndarray:
        return predict(self, features)


def fit_ols(ds: Dataset) -> LinearModel:
    """Least-squares fit; minimum-norm coefficients when the design is rank deficient.

    Columns and target are centred first so the intercept is left out of
    the norm being minimised. The centred system is solved by a complete
    orthogonal decomposition (QR with column pivoting) that treats pivots
    below ``RANK_TOL`` times the largest as zero.
    """
    if len(ds) == 0:
        raise DataError("cannot fit an empty dataset")
    x = ds.features
    y = ds.target
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    yc = y - y_mean
    if xc.shape[1] == 0 or not np.any(xc):
        coef = np.zeros(x.shape[1])
    else:
        coef, _, rank, _ = scipy.linalg.lstsq(xc, yc, cond=RANK_TOL, lapack_driver="gelsy")
    intercept = float(y_mean - x_mean @ coef)
    return LinearModel(coef, intercept, ds.column_names)


def predict(model: LinearModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != len(model.column_names):
        raise DataError(f"model expects {len(model.column_names)} columns, got {x.shape[1]}")
    return x @ model.coefficients + model.intercept
