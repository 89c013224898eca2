"""Descriptive statistics used as bin features.

Scalar functions take one sequence. ``window_stats`` computes the same
quantities along axis 1 of a stacked ``(bins, size, channels)`` array.

Conventions: ``std`` is the sample standard deviation (divisor n - 1);
``kurtosis`` is the excess kurtosis m4 / m2**2 - 3 with divisor-n central
moments, and is 0 for a constant sequence.
"""

from __future__ import annotations

import numpy as np

FEATURES = ("mean", "std", "range", "median", "kurtosis")
_NEEDS_TWO = {"std", "kurtosis"}


def _as_array(xs, name: str, min_len: int = 1) -> np.ndarray:
    arr = np.asarray(xs, dtype=np.float64).ravel()
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} value(s)")
    return arr


def mean(xs) -> float:
    arr = _as_array(xs, "mean")
    lo = arr.min()
    if lo == arr.max():
        return float(lo)
    return float(np.mean(arr))


def std(xs) -> float:
    arr = _as_array(xs, "std", 2)
    if arr.min() == arr.max():
        return 0.0
    return float(np.std(arr, ddof=1))


def value_range(xs) -> float:
    arr = _as_array(xs, "range")
    return float(arr.max() - arr.min())


def median(xs) -> float:
    return float(np.median(_as_array(xs, "median")))


def kurtosis(xs) -> float:
    arr = _as_array(xs, "kurtosis", 2)
    if arr.min() == arr.max():
        return 0.0
    d = arr - arr.mean()
    d2 = d * d
    m2 = d2.mean()
    if m2 * m2 == 0.0:
        # spread too small to square without underflow; treat as constant
        return 0.0
    return float((d2 * d2).mean() / (m2 * m2) - 3.0)


SCALAR = {
    "mean": mean,
    "std": std,
    "range": value_range,
    "median": median,
    "kurtosis": kurtosis,
}


def window_stats(windows: np.ndarray, features) -> dict[str, np.ndarray]:
    """Statistics of each window of a ``(bins, size, channels)`` array.

    Returns one ``(bins, channels)`` array per requested feature.
    """
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim != 3 or w.shape[1] < 1:
        raise ValueError("windows must have shape (bins, size>=1, channels)")
    features = tuple(features)
    unknown = set(features) - set(FEATURES)
    if unknown:
        raise ValueError(f"unknown features: {sorted(unknown)}")
    if w.shape[1] < 2 and _NEEDS_TWO & set(features):
        raise ValueError("std and kurtosis need windows of at least 2 samples")

    lo = w.min(axis=1)
    hi = w.max(axis=1)
    flat = lo == hi
    out: dict[str, np.ndarray] = {}
    mu = np.where(flat, lo, w.mean(axis=1))
    if "mean" in features:
        out["mean"] = mu
    if "std" in features or "kurtosis" in features:
        d = w - w.mean(axis=1, keepdims=True)
        d2 = d * d
        if "std" in features:
            ss = d2.sum(axis=1)
            out["std"] = np.where(flat, 0.0, np.sqrt(ss / (w.shape[1] - 1)))
        if "kurtosis" in features:
            m2 = d2.mean(axis=1)
            m4 = (d2 * d2).mean(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                k = m4 / (m2 * m2) - 3.0
            out["kurtosis"] = np.where(flat | (m2 * m2 == 0.0), 0.0, k)
    if "range" in features:
        out["range"] = hi - lo
    if "median" in features:
        out["median"] = np.median(w, axis=1)
    return {f: out[f] for f in features}
