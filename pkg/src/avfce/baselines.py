"""Reference estimators: LS and LMMSE on the vectorised channel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowConfig


def ls_estimate(H_hat) -> np.ndarray:
    """LS on the decorrelated observation is the observation itself."""
    return np.array(H_hat, dtype=np.complex128)


@dataclass
class LmmseModel:
    """Channel covariance of vec(H) (row-major), N = Nrx * Ntx."""

    covariance: np.ndarray
    source: str = "sample"
    shape: tuple = ()
    tol: float = 1e-10
    _eig: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        C = np.asarray(self.covariance, dtype=np.complex128)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError(f"covariance must be square, got {C.shape}")
        C = 0.5 * (C + C.conj().T)
        w, Q = np.linalg.eigh(C)
        floor = -self.tol * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
        if w.size and w.min() < floor:
            raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {w.min():.3e})")
        w = np.clip(w, 0.0, None)
        self.covariance = C
        self._eig = (w, Q)

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    def shrinkage(self, noise_variance: float) -> np.ndarray:
        """C (C + sigma^2 I)^-1."""
        w, Q = self._eig
        if noise_variance == 0:
            gains = np.ones_like(w)
        else:
            gains = w / (w + noise_variance)
        return (Q * gains) @ Q.conj().T


def fit_lmmse(H_train, source: str = "sample") -> LmmseModel:
    """Biased sample covariance of vec(H), Hermitian-symmetrised and clipped to PSD.

    ``source='identity'`` ignores the data beyond its shape and uses C = I,
    the exact covariance of i.i.d. CN(0, 1) channels.
    """
    H_train = np.asarray(H_train, dtype=np.complex128)
    if H_train.ndim != 3 or len(H_train) == 0:
        raise ValueError(f"need a non-empty [n, Nrx, Ntx] training set, got {H_train.shape}")
    n, n_rx, n_tx = H_train.shape
    if source == "identity":
        return LmmseModel(np.eye(n_rx * n_tx), "identity", (n_rx, n_tx))
    if source != "sample":
        raise ValueError(f"unknown covariance source {source!r}")
    X = H_train.reshape(n, -1)
    C = X.T @ X.conj() / n
    return LmmseModel(C, "sample", (n_rx, n_tx))


def analytic_lmmse(n_rx: int, n_tx: int) -> LmmseModel:
    return LmmseModel(np.eye(n_rx * n_tx), "identity", (n_rx, n_tx))


def apply_lmmse(model: LmmseModel, H_hat, noise_variance: float) -> np.ndarray:
    """vec(H_est) = C (C + sigma^2 I)^-1 vec(H_hat)."""
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    H_hat = np.asarray(H_hat, dtype=np.complex128)
    shape = H_hat.shape
    n = shape[-2] * shape[-1]
    if n != model.dim:
        raise ValueError(f"observation has {n} entries, covariance expects {model.dim}")
    W = model.shrinkage(noise_variance)
    X = H_hat.reshape(-1, n)
    return (X @ W.T).reshape(shape)


def lmmse_nmse_iid(noise_variance: float) -> float:
    """Closed-form NMSE of LMMSE on i.i.d. unit-power channels: sigma^2 / (1 + sigma^2)."""
    return noise_variance / (1.0 + noise_variance)


def flow_matching_config(base: FlowConfig | None = None) -> FlowConfig:
    """The p = 0 ablation: every pair has s = t, so the net learns the instantaneous field."""
    base = base or FlowConfig()
    return FlowConfig(time_mean=base.time_mean, time_std=base.time_std, mix_ratio=0.0)
