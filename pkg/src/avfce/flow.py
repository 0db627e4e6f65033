"""Average-velocity-field training and inference on the noisy-to-clean flow.

The flow runs along the straight path ``H_t = (1 - t) H + t H_hat`` from the
clean channel (t = 0) to its noisy observation (t = 1), so the
instantaneous velocity is the constant ``V = H_hat - H``.  The network
learns the average velocity ``U(H_t, s, t)`` over ``[s, t]``; its regression
target is ``V - (t - s) dU/dt`` with ``dU/dt`` obtained as a forward-mode
JVP along the tangent ``(V, 0, 1)`` and detached from the graph.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit

from .autodiff import DualTensor, Tape, Tensor, backward, jvp, mse, stop_gradient
from .network import AdamState, BackboneConfig, EmaState, VelocityNet, adam_step, ema_update
from .signal import PilotMatrix, complex_awgn, from_angular, ls_decorrelate, pack, to_angular, unpack

logger = logging.getLogger(__name__)

DOMAINS = ("angular", "spatial")
NOISE_MODES = ("awgn", "scaled")
LR_SCHEDULES = ("constant", "cosine")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, iteration: int, snr_db: float, s, t):
        s_rng = (float(np.min(s)), float(np.max(s)))
        t_rng = (float(np.min(t)), float(np.max(t)))
        super().__init__(
            f"non-finite loss at iteration {iteration} (snr={snr_db} dB, s in {s_rng}, t in {t_rng})"
        )
        self.iteration = iteration
        self.snr_db = snr_db


@dataclass(frozen=True)
class FlowConfig:
    time_mean: float = 0.4
    time_std: float = 1.0
    mix_ratio: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ValueError(f"mix_ratio must lie in [0, 1], got {self.mix_ratio}")
        if self.time_std <= 0:
            raise ValueError(f"time_std must be positive, got {self.time_std}")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 8000
    batch_size: int = 512
    lr: float = 1e-4
    warmup_steps: int = 500
    lr_schedule: str = "constant"
    snr_grid_db: tuple = tuple(range(-10, 31, 5))
    seed: int = 0
    ema_decay: float = 0.999
    domain: str = "angular"
    noise_mode: str = "awgn"
    log_every: int = 100

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(x) for x in self.snr_grid_db))
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError(f"ema_decay must lie in [0, 1], got {self.ema_decay}")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")


class TimePair(NamedTuple):
    s: np.ndarray | float
    t: np.ndarray | float


def sample_time_pair(cfg: FlowConfig, rng: np.random.Generator, size=None) -> TimePair:
    """Two logit-normal draws sorted into ``s <= t``; ``s`` collapses onto ``t``
    with probability ``1 - mix_ratio``."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    z = rng.normal(cfg.time_mean, cfg.time_std, size=(2,) + shape)
    u = expit(z)
    t = np.maximum(u[0], u[1])
    s = np.minimum(u[0], u[1])
    distinct = rng.random(shape) < cfg.mix_ratio
    s = np.where(distinct, s, t)
    if size is None:
        return TimePair(float(s), float(t))
    return TimePair(s, t)


def _per_sample(t, like: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (like.ndim - t.ndim))


def state_transform(H, H_hat, t):
    """H_t = (1 - t) H + t H_hat."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > 1):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    H = np.asarray(H)
    tt = _per_sample(t_arr, H)
    return (1.0 - tt) * H + tt * np.asarray(H_hat)


def ivf(H, H_hat):
    """Instantaneous velocity of the straight path: V = H_hat - H."""
    H, H_hat = np.asarray(H), np.asarray(H_hat)
    if H.shape != H_hat.shape:
        raise ValueError(f"shape mismatch: {H.shape} vs {H_hat.shape}")
    return H_hat - H


def _check_times(s, t) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(s > t) or np.any(s < 0) or np.any(t > 1):
        raise ValueError("need 0 <= s <= t <= 1")
    return s, t


def compute_target(net: Callable, h_t, s, t, v) -> Tensor:
    """Detached regression target ``V - (t - s) dU/dt``.

    ``dU/dt`` is the JVP of ``net`` at ``(h_t, s, t)`` along ``(v, 0, 1)``.
    """
    s, t = _check_times(s, t)
    v = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
    _, dudt = jvp(net, (h_t, s, t), (v, np.zeros(s.shape), np.ones(t.shape)))
    if not np.isfinite(dudt.data).all():
        raise FloatingPointError("non-finite JVP while building the target")
    target = v - _per_sample(t - s, v) * dudt.data
    return stop_gradient(Tensor._wrap(target))


# --------------------------------------------------------------------------
# training


@dataclass
class TrainState:
    net: VelocityNet
    adam: AdamState
    ema: EmaState
    iteration: int = 0
    losses: list = field(default_factory=list)

    def ema_net(self) -> VelocityNet:
        return self.net.with_params(self.ema.shadow)


def init_train_state(backbone: BackboneConfig, train: TrainConfig) -> TrainState:
    net = VelocityNet(backbone, seed=train.seed, requires_grad=True)
    decay = train.iterations if train.lr_schedule == "cosine" else 0
    adam = AdamState.for_params(net.arrays(), lr=train.lr, warmup_steps=train.warmup_steps, decay_steps=decay)
    ema = EmaState(net.arrays(), train.ema_decay)
    return TrainState(net, adam, ema)


def make_pair(H, snr_db: float, rng: np.random.Generator, domain: str = "angular",
              noise_mode: str = "awgn") -> tuple[np.ndarray, np.ndarray]:
    """Clean and noisy packed channels for a batch ``H`` [B, Nrx, Ntx]."""
    H = np.asarray(H, dtype=np.complex128)
    snr = 10.0 ** (snr_db / 10.0)
    if noise_mode == "awgn":
        noise = complex_awgn(H.shape, 1.0 / snr, rng)
    elif noise_mode == "scaled":
        noise = H / np.sqrt(snr)
    else:
        raise ValueError(f"unknown noise_mode {noise_mode!r}")
    H_hat = H + noise
    if domain == "angular":
        H, H_hat = to_angular(H), to_angular(H_hat)
    elif domain != "spatial":
        raise ValueError(f"unknown domain {domain!r}")
    return pack(H), pack(H_hat)


def _ema_decay(decay: float, n_updates: int) -> float:
    # Short runs would otherwise average in the zero-initialised head.
    return min(decay, (1.0 + n_updates) / (10.0 + n_updates))


def loss_and_grads(net: VelocityNet, clean, noisy, s, t) -> tuple[float, list[np.ndarray]]:
    """One fused pass: dual forward under a tape, detached target, MSE backward."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    h_t = state_transform(clean, noisy, t)
    v = ivf(clean, noisy)
    with Tape() as tape:
        out = net(DualTensor(h_t, v), DualTensor(s, np.zeros(s.shape)), DualTensor(t, np.ones(t.shape)))
        target = v - _per_sample(t - s, v) * out.tangent.data
        loss = mse(out.primal, stop_gradient(target))
    grads = backward(tape, loss, net.params)
    return float(loss.data), grads


def train_step(state: TrainState, H_batch, flow: FlowConfig, train: TrainConfig,
               rng: np.random.Generator) -> float:
    """Draw an SNR and time pairs, regress onto the detached target, update Adam and EMA."""
    if len(H_batch) == 0:
        raise ValueError("empty training batch")
    snr_db = float(rng.choice(train.snr_grid_db))
    clean, noisy = make_pair(H_batch, snr_db, rng, train.domain, train.noise_mode)
    s, t = sample_time_pair(flow, rng, size=len(H_batch))
    loss, grads = loss_and_grads(state.net, clean, noisy, s, t)
    if not np.isfinite(loss):
        raise NonFiniteLossError(state.iteration, snr_db, s, t)
    new_params, _ = adam_step(state.net.params, grads, state.adam, names=state.net.names)
    state.net = state.net.with_params(new_params, requires_grad=True)
    state.ema = ema_update(state.ema, new_params, _ema_decay(state.ema.decay, state.iteration))
    state.iteration += 1
    state.losses.append(loss)
    return loss


def train(samples, backbone: BackboneConfig | None = None, flow: FlowConfig | None = None,
          train_cfg: TrainConfig | None = None, state: TrainState | None = None,
          callback: Callable[[int, float], None] | None = None) -> TrainState:
    """Run ``train_cfg.iterations`` steps on batches drawn from ``samples`` [n, Nrx, Ntx]."""
    backbone = backbone or BackboneConfig()
    flow = flow or FlowConfig()
    train_cfg = train_cfg or TrainConfig()
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim != 3 or len(samples) == 0:
        raise ValueError(f"need a non-empty [n, Nrx, Ntx] channel set, got {samples.shape}")
    state = state or init_train_state(backbone, train_cfg)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([train_cfg.seed, 1])))
    for i in range(train_cfg.iterations):
        idx = rng.integers(0, len(samples), size=train_cfg.batch_size)
        loss = train_step(state, samples[idx], flow, train_cfg, rng)
        if callback is not None:
            callback(state.iteration, loss)
        if train_cfg.log_every and (i % train_cfg.log_every == 0 or i == train_cfg.iterations - 1):
            logger.info("iter %d loss %.6g lr %.3g", state.iteration, loss, state.adam.current_lr())
    return state


# --------------------------------------------------------------------------
# inference


def _field(net):
    return net.forward if isinstance(net, VelocityNet) else net


def infer(net, H_hat, nfe: int = 1, literal: bool = False) -> np.ndarray:
    """Walk the observation from t = 1 back to t = 0 in ``nfe`` equal jumps.

    Each jump applies ``X <- X - (t - s) U(X, s, t)``.  ``literal=True`` drops
    the ``(t - s)`` factor, which only matters for ``nfe > 1``.

    ``H_hat`` is complex [Nrx, Ntx] or [B, Nrx, Ntx]; ``net`` is a
    :class:`VelocityNet` or any callable ``(packed, s, t) -> packed``.
    """
    if int(nfe) != nfe or nfe < 1:
        raise ValueError(f"nfe must be a positive integer, got {nfe}")
    nfe = int(nfe)
    H_hat = np.asarray(H_hat, dtype=np.complex128)
    single = H_hat.ndim == 2
    x = pack(H_hat[None] if single else H_hat)
    f = _field(net)
    step = 1.0 / nfe
    n = x.shape[0]
    for i in range(nfe, 0, -1):
        s = np.full(n, (i - 1) / nfe)
        t = np.full(n, i / nfe)
        u = np.asarray(f(x, s, t))
        x = x - u if literal else x - step * u
    out = unpack(x)
    return out[0] if single else out


def denoise(net, H_hat, nfe: int = 1, domain: str = "angular", literal: bool = False) -> np.ndarray:
    """Spatial-domain LS observation in, spatial-domain estimate out."""
    if domain == "angular":
        return from_angular(infer(net, to_angular(H_hat), nfe, literal))
    if domain == "spatial":
        return infer(net, H_hat, nfe, literal)
    raise ValueError(f"unknown domain {domain!r}")


def estimate_channel(net, Y, pilots: PilotMatrix, nfe: int = 1, domain: str = "angular",
                     literal: bool = False) -> np.ndarray:
    """Decorrelate, move to the angular domain, run ``nfe`` jumps, move back."""
    return denoise(net, ls_decorrelate(Y, pilots), nfe, domain, literal)
