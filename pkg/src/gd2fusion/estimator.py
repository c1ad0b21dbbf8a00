"""scikit-learn style wrapper around network construction, training, and fusion."""

from __future__ import annotations

import tempfile
from pathlib import Path
import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .degradations import DegradedSample
from .inference import fuse
from .losses import LossConfig, total_loss
from .network import NetworkConfig, load_params, load_metadata, save_params
from .prompts import DEFAULT_PROMPT_DIM, make_provider
from .trainer import TrainConfig, train


def check_samples(X) -> list[DegradedSample]:
    samples = list(X)
    if not samples:
        raise ValueError("expected a non-empty sequence of DegradedSample")
    for i, s in enumerate(samples):
        if not isinstance(s, DegradedSample):
            raise TypeError(f"item {i} is {type(s).__name__}, expected DegradedSample")
        if s.ir_degraded.shape != s.vi_degraded.shape:
            raise ValueError(f"sample {i}: infrared and visible images differ in shape")
    return samples


class FusionEstimator(TransformerMixin, BaseEstimator):
    """Degradation-aware infrared/visible fusion as a fit/transform estimator.

    ``X`` is a sequence of :class:`DegradedSample`. ``fit`` trains on the
    degraded inputs against their references; ``transform`` returns fused
    images of shape (n, 3, H, W) in [0, 1].

    Parameters mirror :class:`NetworkConfig` and :class:`TrainConfig`;
    ``provider`` is ``"stub"`` or ``"file:PATH"``. Checkpoints go to
    ``out_dir`` (a temporary directory when None).
    """

    def __init__(
        self,
        channels=16,
        layers=3,
        n_conv=3,
        n_transformer=2,
        kernels=(3, 5, 7),
        prompt_dim=DEFAULT_PROMPT_DIM,
        window=8,
        patch=64,
        batch_size=4,
        lr=2.5e-4,
        epochs=1,
        max_steps=None,
        seed=0,
        gamma=5.0,
        lam=5.0,
        theta=6.0,
        provider="stub",
        out_dir=None,
    ):
        self.channels = channels
        self.layers = layers
        self.n_conv = n_conv
        self.n_transformer = n_transformer
        self.kernels = kernels
        self.prompt_dim = prompt_dim
        self.window = window
        self.patch = patch
        self.batch_size = batch_size
        self.lr = lr
        self.epochs = epochs
        self.max_steps = max_steps
        self.seed = seed
        self.gamma = gamma
        self.lam = lam
        self.theta = theta
        self.provider = provider
        self.out_dir = out_dir

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            channels=self.channels,
            layers=self.layers,
            n_conv=self.n_conv,
            n_transformer=self.n_transformer,
            kernels=tuple(self.kernels),
            prompt_dim=self.prompt_dim,
            window=self.window,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            patch=self.patch,
            batch=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            seed=self.seed,
            gamma=self.gamma,
            lam=self.lam,
            theta=self.theta,
            max_steps=self.max_steps,
            provider=self.provider,
        )

    def fit(self, X, y=None):
        samples = check_samples(X)
        out_dir = self.out_dir or tempfile.mkdtemp(prefix="gd2fusion-")
        provider = make_provider(self.provider, self.prompt_dim)
        result = train(self.network_config(), self.train_config(), samples, out_dir, provider=provider)
        self.network_ = result.network
        self.provider_ = provider
        self.history_ = result.history
        self.checkpoint_ = result.checkpoint
        return self

    def fuse(self, ir, vi, prompt_ir, prompt_vi) -> np.ndarray:
        check_is_fitted(self, "network_")
        return fuse(self.network_, ir, vi, prompt_ir, prompt_vi, self.provider_)

    def transform(self, X) -> np.ndarray:
        samples = check_samples(X)
        return np.stack([self.fuse(s.ir_degraded, s.vi_degraded, s.prompt_ir, s.prompt_vi) for s in samples])

    predict = transform

    def score(self, X, y=None) -> float:
        """Negative mean total loss of the fused outputs against the references."""
        samples = check_samples(X)
        fused = self.transform(samples)
        cfg = LossConfig(self.gamma, self.lam, self.theta)
        losses = []
        for f, s in zip(fused, samples):
            rep = total_loss(*(torch.from_numpy(np.asarray(a, dtype=np.float32))[None] for a in (f, s.ir_ref, s.vi_ref)), cfg)
            losses.append(float(rep.total))
        return -float(np.mean(losses))

    def save(self, path) -> Path:
        check_is_fitted(self, "network_")
        save_params(self.network_, path, {"provider": self.provider})
        return Path(path)

    @classmethod
    def from_checkpoint(cls, path, provider: str | None = None) -> "FusionEstimator":
        net = load_params(path)
        meta = load_metadata(path)
        cfg = net.config
        est = cls(
            channels=cfg.channels,
            layers=cfg.layers,
            n_conv=cfg.n_conv,
            n_transformer=cfg.n_transformer,
            kernels=cfg.kernels,
            prompt_dim=cfg.prompt_dim,
            window=cfg.window,
            provider=provider or meta.get("provider", "stub"),
        )
        train_meta = meta.get("train")
        if train_meta:
            for key, attr in (("patch", "patch"), ("batch", "batch_size"), ("lr", "lr"), ("seed", "seed")):
                setattr(est, attr, train_meta[key])
        est.network_ = net.eval()
        est.provider_ = make_provider(est.provider, cfg.prompt_dim)
        est.history_ = []
        est.checkpoint_ = Path(path)
        return est
