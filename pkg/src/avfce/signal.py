"""Pilot transmission, AWGN, LS decorrelation and the unitary angular transform.

Channels are complex numpy arrays with the antenna axes last
(``[..., Nrx, Ntx]``).  The network sees them packed as two real planes,
real part first: ``[..., 2, Nrx, Ntx]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SnrSpec:
    """Per-entry channel power over per-entry noise variance, in dB."""

    snr_db: float

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def noise_variance(self) -> float:
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        return 1.0 / self.snr_linear


class PilotMatrix:
    """Pilot block ``P`` (Ntx x Np) with ``P P^H = I``."""

    def __init__(self, P, tol: float = 1e-10):
        P = np.asarray(P, dtype=np.complex128)
        if P.ndim != 2:
            raise ValueError(f"pilot matrix must be 2-D, got shape {P.shape}")
        self.P = P
        gram = P @ P.conj().T
        self.unitary = bool(np.allclose(gram, np.eye(P.shape[0]), rtol=0.0, atol=tol))

    @property
    def n_tx(self) -> int:
        return self.P.shape[0]

    @property
    def n_pilots(self) -> int:
        return self.P.shape[1]

    @classmethod
    def dft(cls, n_tx: int) -> "PilotMatrix":
        k = np.arange(n_tx)
        return cls(np.exp(-2j * np.pi * np.outer(k, k) / n_tx) / np.sqrt(n_tx))

    @classmethod
    def identity(cls, n_tx: int) -> "PilotMatrix":
        return cls(np.eye(n_tx))


def complex_awgn(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    if variance == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit(H, pilots: PilotMatrix, snr: SnrSpec, rng: np.random.Generator) -> np.ndarray:
    """Y = H P + N, N i.i.d. CN(0, sigma^2)."""
    H = np.asarray(H, dtype=np.complex128)
    if H.shape[-1] != pilots.n_tx:
        raise ValueError(f"channel has {H.shape[-1]} tx antennas, pilot block expects {pilots.n_tx}")
    clean = H @ pilots.P
    return clean + complex_awgn(clean.shape, snr.noise_variance, rng)


def ls_decorrelate(Y, pilots: PilotMatrix) -> np.ndarray:
    """H_hat = Y P^H; the noise stays white with variance sigma^2."""
    if not pilots.unitary:
        raise ValueError("LS decorrelation needs a unitary pilot matrix (P P^H = I)")
    Y = np.asarray(Y, dtype=np.complex128)
    if Y.shape[-1] != pilots.n_pilots:
        raise ValueError(f"observation has {Y.shape[-1]} pilot columns, expected {pilots.n_pilots}")
    return Y @ pilots.P.conj().T


def to_angular(H) -> np.ndarray:
    return np.fft.fft2(np.asarray(H, dtype=np.complex128), axes=(-2, -1), norm="ortho")


def from_angular(H_ang) -> np.ndarray:
    return np.fft.ifft2(np.asarray(H_ang, dtype=np.complex128), axes=(-2, -1), norm="ortho")


def pack(H) -> np.ndarray:
    """Complex [..., Nrx, Ntx] -> real [..., 2, Nrx, Ntx] (real, imag)."""
    H = np.asarray(H)
    return np.stack([H.real, H.imag], axis=-3).astype(np.float64)


def unpack(X) -> np.ndarray:
    X = np.asarray(X)
    if X.shape[-3] != 2:
        raise ValueError(f"expected 2 planes on axis -3, got shape {X.shape}")
    return X[..., 0, :, :] + 1j * X[..., 1, :, :]
