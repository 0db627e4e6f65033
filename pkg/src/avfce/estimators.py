"""scikit-learn style wrappers.

All estimators take LS-decorrelated observations ``H_hat`` ([n, Nrx, Ntx]
complex, spatial domain) in ``predict`` and return spatial-domain channel
estimates.  ``fit`` takes clean training channels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import flow
from .baselines import apply_lmmse, fit_lmmse
from .checkpoint import Checkpoint
from .config import DataConfig, ExperimentConfig
from .flow import FlowConfig, TrainConfig
from .metrics import nmse_db
from .network import BackboneConfig
from .validation import check_channels, check_nfe, check_noise_variance


class _ScoreMixin:
    def score(self, X, y) -> float:
        """Negative NMSE in dB (higher is better)."""
        return -nmse_db(self.predict(X), check_channels(y, "y"))


class LSEstimator(_ScoreMixin, BaseEstimator):
    def fit(self, X=None, y=None):
        if X is not None:
            self.n_antennas_ = check_channels(X).shape[1:]
        else:
            self.n_antennas_ = None
        return self

    def predict(self, X):
        check_is_fitted(self, "n_antennas_")
        return check_channels(X, n_antennas=self.n_antennas_).copy()


class LMMSEEstimator(_ScoreMixin, BaseEstimator):
    """Wiener filter on vec(H) with a sample (or identity) covariance."""

    def __init__(self, noise_variance=None, covariance="sample"):
        self.noise_variance = noise_variance
        self.covariance = covariance

    def fit(self, X, y=None):
        X = check_channels(X)
        self.model_ = fit_lmmse(X, self.covariance)
        self.n_antennas_ = X.shape[1:]
        return self

    def predict(self, X, noise_variance=None):
        check_is_fitted(self, "model_")
        X = check_channels(X, n_antennas=self.n_antennas_)
        sigma2 = check_noise_variance(self.noise_variance if noise_variance is None else noise_variance)
        return apply_lmmse(self.model_, X, sigma2)


class AVFEstimator(_ScoreMixin, BaseEstimator):
    """One-step generative denoiser trained on the average velocity field.

    ``predict`` needs no noise level: the network infers it from the
    observation.  ``nfe`` sets the number of network evaluations along the
    path; ``mix_ratio=0`` gives the plain flow-matching ablation.
    """

    def __init__(self, hidden_planes=44, depth=5, kernel=3, time_mean=0.4, time_std=1.0,
                 mix_ratio=0.25, iterations=8000, batch_size=512, lr=1e-4, warmup_steps=500,
                 lr_schedule="constant", snr_grid_db=tuple(range(-10, 31, 5)), ema_decay=0.999,
                 domain="angular", noise_mode="awgn", nfe=1, seed=0, log_every=100):
        self.hidden_planes = hidden_planes
        self.depth = depth
        self.kernel = kernel
        self.time_mean = time_mean
        self.time_std = time_std
        self.mix_ratio = mix_ratio
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.warmup_steps = warmup_steps
        self.lr_schedule = lr_schedule
        self.snr_grid_db = snr_grid_db
        self.ema_decay = ema_decay
        self.domain = domain
        self.noise_mode = noise_mode
        self.nfe = nfe
        self.seed = seed
        self.log_every = log_every

    def _configs(self):
        backbone = BackboneConfig(hidden_planes=self.hidden_planes, depth=self.depth, kernel=self.kernel)
        flow_cfg = FlowConfig(self.time_mean, self.time_std, self.mix_ratio)
        train_cfg = TrainConfig(
            iterations=self.iterations, batch_size=self.batch_size, lr=self.lr,
            warmup_steps=self.warmup_steps, lr_schedule=self.lr_schedule,
            snr_grid_db=tuple(self.snr_grid_db), seed=self.seed,
            ema_decay=self.ema_decay, domain=self.domain, noise_mode=self.noise_mode,
            log_every=self.log_every,
        )
        return backbone, flow_cfg, train_cfg

    def fit(self, X, y=None):
        X = check_channels(X)
        backbone, flow_cfg, train_cfg = self._configs()
        self.state_ = flow.train(X, backbone, flow_cfg, train_cfg)
        self.n_antennas_ = X.shape[1:]
        self.net_ = self.state_.ema_net()
        self.loss_curve_ = list(self.state_.losses)
        return self

    def predict(self, X, nfe=None):
        check_is_fitted(self, "net_")
        X = check_channels(X, n_antennas=self.n_antennas_)
        steps = check_nfe(self.nfe if nfe is None else nfe)
        return flow.denoise(self.net_, X, steps, self.domain)

    def to_checkpoint(self) -> Checkpoint:
        check_is_fitted(self, "state_")
        backbone, flow_cfg, train_cfg = self._configs()
        n_rx, n_tx = self.n_antennas_
        data = DataConfig(n_rx=n_rx, n_tx=n_tx)
        config = ExperimentConfig(backbone, flow_cfg, train_cfg, data)
        return Checkpoint.from_state(config, self.state_)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, nfe: int = 1) -> "AVFEstimator":
        b, f, t = ckpt.config.backbone, ckpt.config.flow, ckpt.config.train
        est = cls(
            hidden_planes=b.hidden_planes, depth=b.depth, kernel=b.kernel,
            time_mean=f.time_mean, time_std=f.time_std, mix_ratio=f.mix_ratio,
            iterations=t.iterations, batch_size=t.batch_size, lr=t.lr, warmup_steps=t.warmup_steps,
            lr_schedule=t.lr_schedule, snr_grid_db=t.snr_grid_db, ema_decay=t.ema_decay,
            domain=t.domain, noise_mode=t.noise_mode, nfe=nfe, seed=t.seed, log_every=t.log_every,
        )
        est.net_ = ckpt.net(use_ema=True)
        est.n_antennas_ = (ckpt.config.data.n_rx, ckpt.config.data.n_tx)
        return est
