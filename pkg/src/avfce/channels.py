"""Ground-truth channel generators and the CHDS dataset file format.

Two families:

* i.i.d. Rayleigh (``gen_gaussian``): every entry CN(0, 1).  Used where a
  closed-form oracle is needed.
* clustered multipath (``gen_clustered``): a sum of ``n_paths`` outer
  products of half-wavelength ULA responses.  Path angles scatter around one
  cluster centre per side, so the channel is sparse after a 2-D DFT.

Every sample is a pure function of ``(config, seed, index)``: its generator
is a Philox counter-based stream keyed by ``SeedSequence([seed, index])``.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHDS_MAGIC = b"CHDS"
CHDS_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")


class DatasetError(ValueError):
    """Malformed CHDS file."""


def sample_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def steering_vector(n_antennas: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response, a_m = exp(j pi m sin(angle))."""
    m = np.arange(n_antennas)
    return np.exp(1j * np.pi * m * np.sin(angle))


@dataclass(frozen=True)
class ClusterConfig:
    n_paths: int = 3
    angle_spread_deg: float = 4.0
    rx_antennas: int = 16
    tx_antennas: int = 64
    on_grid: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.rx_antennas < 1 or self.tx_antennas < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.angle_spread_deg < 0:
            raise ValueError("angle_spread_deg must be non-negative")


_MAX_ANGLE = np.deg2rad(80.0)


def _grid_angle(n: int, rng: np.random.Generator) -> float:
    # sin(theta) = 2p/n keeps the response on a DFT bin.
    half = (n - 1) // 2
    p = rng.integers(-half, half + 1) if half > 0 else 0
    return float(np.arcsin(2.0 * p / n))


def _path_angles(center: float, spread: float, count: int, rng: np.random.Generator) -> np.ndarray:
    return np.clip(center + spread * rng.standard_normal(count), -_MAX_ANGLE, _MAX_ANGLE)


def gen_clustered(cfg: ClusterConfig, rng: np.random.Generator, gains=None) -> np.ndarray:
    """One Nrx x Ntx clustered channel with E||H||_F^2 = Nrx * Ntx."""
    L = cfg.n_paths
    if gains is None:
        gains = np.sqrt(0.5 / L) * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
    gains = np.broadcast_to(np.asarray(gains, dtype=np.complex128), (L,))
    if cfg.on_grid:
        rx_angles = np.array([_grid_angle(cfg.rx_antennas, rng) for _ in range(L)])
        tx_angles = np.array([_grid_angle(cfg.tx_antennas, rng) for _ in range(L)])
    else:
        spread = np.deg2rad(cfg.angle_spread_deg)
        rx_center, tx_center = rng.uniform(-_MAX_ANGLE, _MAX_ANGLE, size=2)
        rx_angles = _path_angles(rx_center, spread, L, rng)
        tx_angles = _path_angles(tx_center, spread, L, rng)
    H = np.zeros((cfg.rx_antennas, cfg.tx_antennas), dtype=np.complex128)
    for g, th, ph in zip(gains, rx_angles, tx_angles):
        H += g * np.outer(steering_vector(cfg.rx_antennas, th), steering_vector(cfg.tx_antennas, ph).conj())
    return H


def gen_gaussian(n_rx: int, n_tx: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) entries."""
    return np.sqrt(0.5) * (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx)))


@dataclass
class Dataset:
    samples: np.ndarray
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be [count, Nrx, Ntx], got {self.samples.shape}")
        if not np.isfinite(self.samples).all():
            raise ValueError("dataset contains non-finite entries")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_rx(self) -> int:
        return self.samples.shape[1]

    @property
    def n_tx(self) -> int:
        return self.samples.shape[2]

    def power_ratio(self) -> float:
        """Empirical E||H||_F^2 / (Nrx * Ntx)."""
        if len(self) == 0:
            return float("nan")
        return float(np.mean(np.abs(self.samples) ** 2))

    def normalized(self) -> "Dataset":
        ratio = self.power_ratio()
        meta = dict(self.metadata, normalized=True)
        return Dataset(self.samples / np.sqrt(ratio), self.seed, meta)

    def save(self, path) -> None:
        write_chds(path, self)

    @classmethod
    def load(cls, path) -> "Dataset":
        return read_chds(path)


def make_dataset(kind: str, count: int, seed: int, n_rx: int = 16, n_tx: int = 64,
                 cluster: ClusterConfig | None = None) -> Dataset:
    """Generate ``count`` channels of ``kind`` ('gaussian' or 'clustered')."""
    if kind == "gaussian":
        samples = [gen_gaussian(n_rx, n_tx, sample_rng(seed, i)) for i in range(count)]
        meta = {"kind": kind, "n_rx": n_rx, "n_tx": n_tx}
    elif kind == "clustered":
        cluster = cluster or ClusterConfig(rx_antennas=n_rx, tx_antennas=n_tx)
        n_rx, n_tx = cluster.rx_antennas, cluster.tx_antennas
        samples = [gen_clustered(cluster, sample_rng(seed, i)) for i in range(count)]
        meta = {"kind": kind, **asdict(cluster)}
    else:
        raise ValueError(f"unknown channel kind {kind!r}; expected 'gaussian' or 'clustered'")
    arr = np.array(samples, dtype=np.complex128).reshape(count, n_rx, n_tx)
    return Dataset(arr, seed, meta)


def write_chds(path, dataset: Dataset) -> None:
    count, n_rx, n_tx = dataset.samples.shape
    header = _HEADER.pack(CHDS_MAGIC, CHDS_VERSION, n_rx, n_tx, count, dataset.seed)
    body = np.ascontiguousarray(dataset.samples).astype("<c16").tobytes()
    Path(path).write_bytes(header + body)


def read_chds(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetError(f"{path}: truncated CHDS header")
    magic, version, n_rx, n_tx, count, seed = _HEADER.unpack_from(raw)
    if magic != CHDS_MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}, expected {CHDS_MAGIC!r}")
    if version != CHDS_VERSION:
        raise DatasetError(f"{path}: unsupported CHDS version {version}")
    expected = count * n_rx * n_tx * 16
    body = raw[_HEADER.size :]
    if len(body) != expected:
        raise DatasetError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    samples = np.frombuffer(body, dtype="<c16").astype(np.complex128).reshape(count, n_rx, n_tx)
    return Dataset(samples, seed, {"source": str(path)})
