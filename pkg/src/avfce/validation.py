"""Input checks shared by the estimator classes."""

import numpy as np


def check_channels(X, name: str = "X", n_antennas: tuple | None = None) -> np.ndarray:
    """Coerce to a finite complex array [n, Nrx, Ntx] (a single [Nrx, Ntx] is promoted)."""
    arr = np.asarray(X)
    if arr.dtype == object or not (np.issubdtype(arr.dtype, np.number)):
        raise TypeError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.complex128, copy=False)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be [n, Nrx, Ntx], got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or Inf")
    if n_antennas is not None and arr.shape[1:] != tuple(n_antennas):
        raise ValueError(f"{name} has antenna shape {arr.shape[1:]}, estimator was fit on {tuple(n_antennas)}")
    return arr


def check_noise_variance(value) -> float:
    if value is None:
        raise ValueError("noise_variance is required for this estimator")
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"noise_variance must be finite and >= 0, got {value}")
    return value


def check_nfe(nfe) -> int:
    if int(nfe) != nfe or nfe < 1:
        raise ValueError(f"nfe must be a positive integer, got {nfe}")
    return int(nfe)
