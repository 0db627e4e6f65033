"""Convolutional backbone for the average velocity field, plus Adam and EMA state."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, broadcast_planes, concat, conv2d, silu

logger = logging.getLogger(__name__)

DATA_PLANES = 2  # real, imag
COND_PLANES = 2  # s, t


@dataclass(frozen=True)
class BackboneConfig:
    """Shape-preserving conv stack ``in_planes -> hidden x (depth-1) -> 2``."""

    in_planes: int = DATA_PLANES + COND_PLANES
    hidden_planes: int = 44
    depth: int = 5
    kernel: int = 3

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.in_planes != DATA_PLANES + COND_PLANES:
            raise ValueError(f"in_planes must be {DATA_PLANES + COND_PLANES} (2 data + s, t planes)")
        if self.hidden_planes < 1:
            raise ValueError("hidden_planes must be positive")

    @property
    def plane_sizes(self) -> list[int]:
        return [self.in_planes] + [self.hidden_planes] * (self.depth - 1) + [DATA_PLANES]

    @property
    def n_params(self) -> int:
        sizes = self.plane_sizes
        k2 = self.kernel * self.kernel
        return sum(a * b * k2 + b for a, b in zip(sizes[:-1], sizes[1:]))


def init_params(config: BackboneConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """He-uniform fan-in kernels, zero biases, zero final layer."""
    sizes = config.plane_sizes
    k = config.kernel
    params = []
    for i, (c_in, c_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == config.depth - 1
        if last:
            w = np.zeros((c_out, c_in, k, k))
        else:
            bound = np.sqrt(6.0 / (c_in * k * k))
            w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k))
        params.append(w)
        params.append(np.zeros(c_out))
    return params


def param_names(config: BackboneConfig) -> list[str]:
    names = []
    for i in range(config.depth):
        names += [f"conv{i}.weight", f"conv{i}.bias"]
    return names


class VelocityNet:
    """U_theta(h_t, s, t): predicted average velocity on packed [B,2,Nrx,Ntx] states.

    ``(s, t)`` enter as two constant input planes.  Calling the net directly
    works on :class:`Tensor` / :class:`DualTensor` values and is what the
    training pass differentiates; :meth:`forward` is the plain numpy entry
    point used for inference.
    """

    def __init__(self, config: BackboneConfig | None = None, params=None, seed: int = 0,
                 requires_grad: bool = False):
        self.config = config or BackboneConfig()
        if params is None:
            params = init_params(self.config, np.random.default_rng(seed))
        expected = self._expected_shapes()
        if len(params) != len(expected):
            raise ValueError(f"expected {len(expected)} parameter arrays, got {len(params)}")
        names = param_names(self.config)
        tensors = []
        for name, p, shape in zip(names, params, expected):
            arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            tensors.append(Tensor(arr, requires_grad=requires_grad, name=name))
        self.params = tensors
        self.n_params = sum(t.size for t in tensors)
        logger.debug("VelocityNet with %d parameters", self.n_params)

    def _expected_shapes(self) -> list[tuple[int, ...]]:
        sizes = self.config.plane_sizes
        k = self.config.kernel
        shapes = []
        for c_in, c_out in zip(sizes[:-1], sizes[1:]):
            shapes += [(c_out, c_in, k, k), (c_out,)]
        return shapes

    @property
    def names(self) -> list[str]:
        return param_names(self.config)

    def arrays(self) -> list[np.ndarray]:
        return [p.data for p in self.params]

    def with_params(self, params, requires_grad: bool = False) -> "VelocityNet":
        return VelocityNet(self.config, params=params, requires_grad=requires_grad)

    def __call__(self, h, s, t):
        height, width = h.shape[-2:]
        x = concat([h, broadcast_planes(s, height, width), broadcast_planes(t, height, width)], axis=-3)
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            x = conv2d(x, self.params[2 * i], self.params[2 * i + 1])
            if i < n_layers - 1:
                x = silu(x)
        return x

    def forward(self, h_t, s, t) -> np.ndarray:
        """Evaluate on a packed state ([2,H,W] or [B,2,H,W]) at times ``s <= t``."""
        h_t = np.asarray(h_t, dtype=np.float64)
        if h_t.ndim not in (3, 4) or h_t.shape[-3] != DATA_PLANES:
            raise ValueError(f"expected packed state [.., 2, Nrx, Ntx], got {h_t.shape}")
        s_arr = np.asarray(s, dtype=np.float64)
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(s_arr > t_arr):
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        if h_t.ndim == 4:
            n = h_t.shape[0]
            s_arr = np.broadcast_to(s_arr, (n,))
            t_arr = np.broadcast_to(t_arr, (n,))
        elif s_arr.ndim or t_arr.ndim:
            raise ValueError("unbatched state takes scalar s and t")
        return self(Tensor._wrap(h_t), Tensor._wrap(s_arr), Tensor._wrap(t_arr)).data


# --------------------------------------------------------------------------
# optimiser state


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 500
    decay_steps: int = 0
    min_lr_ratio: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.m = [np.zeros(np.shape(p)) for p in params]
        state.v = [np.zeros(np.shape(p)) for p in params]
        return state

    def current_lr(self) -> float:
        """Linear warmup, then an optional cosine decay ending at ``decay_steps``."""
        if self.warmup_steps > 0 and self.step < self.warmup_steps:
            return self.lr * self.step / self.warmup_steps
        if self.decay_steps <= self.warmup_steps:
            return self.lr
        frac = min(1.0, (self.step - self.warmup_steps) / (self.decay_steps - self.warmup_steps))
        scale = self.min_lr_ratio + (1.0 - self.min_lr_ratio) * 0.5 * (1.0 + math.cos(math.pi * frac))
        return self.lr * scale


def adam_step(params, grads, state: AdamState, names=None):
    """One bias-corrected Adam update with linear learning-rate warmup.

    Returns the new parameter arrays; ``state`` is advanced in place.
    """
    params = [p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64) for p in params]
    if len(grads) != len(params):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    names = names or [f"param{i}" for i in range(len(params))]
    for name, p, g, m in zip(names, params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
    state.step += 1
    lr = state.current_lr()
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return new_params, state


@dataclass
class EmaState:
    shadow: list
    decay: float = 0.999

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"EMA decay must lie in [0, 1], got {self.decay}")
        self.shadow = [np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64) for p in self.shadow]


def ema_update(ema: EmaState, params, decay: float | None = None) -> EmaState:
    """shadow <- decay * shadow + (1 - decay) * params."""
    d = ema.decay if decay is None else decay
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"EMA decay must lie in [0, 1], got {d}")
    params = [p.data if isinstance(p, Tensor) else np.asarray(p) for p in params]
    new = []
    for s, p in zip(ema.shadow, params):
        if s.shape != p.shape:
            raise ValueError(f"EMA shadow shape {s.shape} does not match parameter {p.shape}")
        new.append(d * s + (1.0 - d) * p)
    return EmaState(new, ema.decay)
