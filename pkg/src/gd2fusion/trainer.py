"""Deterministic training loop with resumable checkpoints and a per-step loss CSV."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ._validation import NonFiniteLossError
from .degradations import DegradedSample
from .losses import LossConfig, LossReport, total_loss
from .network import (
    GD2FusionNet,
    NetworkConfig,
    network_from_sections,
    read_param_file,
    write_param_file,
)
from .prompts import EmbeddingProvider, encode_specs, make_provider

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
LOSS_COLUMNS = ("step", "intensity", "texture", "color", "total")


@dataclass
class TrainConfig:
    patch: int = 64
    batch: int = 4
    lr: float = 2.5e-4
    epochs: int = 1
    seed: int = 0
    gamma: float = 5.0
    lam: float = 5.0
    theta: float = 6.0
    checkpoint_every: int = 0  # epochs; 0 keeps only the final checkpoint
    max_steps: int | None = None
    provider: str = "stub"

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.patch < 1:
            raise ValueError("patch must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.gamma, self.lam, self.theta)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    checkpoint: Path
    loss_csv: Path
    history: list[dict] = field(default_factory=list)
    network: GD2FusionNet | None = None


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def make_optimizer(net: GD2FusionNet, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(net.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def crop_batch(samples: Sequence[DegradedSample], patch: int, rng: np.random.Generator):
    """Stack samples into tensors, cropping each at a random offset shared by its four images."""
    out = {k: [] for k in ("ir", "vi", "ir_ref", "vi_ref")}
    for s in samples:
        _, h, w = s.ir_degraded.shape
        if patch > h or patch > w:
            raise ValueError(f"patch {patch} larger than sample size {h}x{w}")
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        window = (slice(None), slice(top, top + patch), slice(left, left + patch))
        out["ir"].append(s.ir_degraded[window])
        out["vi"].append(s.vi_degraded[window])
        out["ir_ref"].append(s.ir_ref[window])
        out["vi_ref"].append(s.vi_ref[window])
    return {k: torch.from_numpy(np.stack(v).astype(np.float32)) for k, v in out.items()}


def prompt_batch(samples: Sequence[DegradedSample], provider: EmbeddingProvider):
    return encode_specs([s.prompt_ir for s in samples], provider), encode_specs([s.prompt_vi for s in samples], provider)


def train_step(net, optimizer, batch: dict, p_ir, p_vi, loss_cfg: LossConfig, step: int = 0) -> LossReport:
    """One Adam update; returns the loss measured before the update."""
    net.train()
    fused = net(batch["ir"], batch["vi"], p_ir, p_vi)
    report = total_loss(fused, batch["ir_ref"], batch["vi_ref"], loss_cfg)
    for name in ("intensity", "texture", "color", "total"):
        if not torch.isfinite(getattr(report, name)):
            raise NonFiniteLossError(name, step)
    optimizer.zero_grad(set_to_none=True)
    report.total.backward()
    optimizer.step()
    return LossReport(*(t.detach() for t in (report.intensity, report.texture, report.color, report.total)))


def _optimizer_sections(optimizer: torch.optim.Adam) -> dict[str, torch.Tensor]:
    sections = {}
    for idx, st in optimizer.state_dict()["state"].items():
        for key in ("step", "exp_avg", "exp_avg_sq"):
            sections[f"optim/{idx}/{key}"] = torch.as_tensor(st[key], dtype=torch.float32).reshape(-1) if key == "step" else st[key]
    return sections


def _restore_optimizer(optimizer: torch.optim.Adam, sections: dict[str, torch.Tensor]) -> None:
    state = optimizer.state_dict()
    restored = {}
    for name, tensor in sections.items():
        if not name.startswith("optim/"):
            continue
        _, idx, key = name.split("/")
        entry = restored.setdefault(int(idx), {})
        entry[key] = tensor.reshape(()) if key == "step" else tensor.clone()
    state["state"] = restored
    optimizer.load_state_dict(state)


def save_training_checkpoint(path, net, optimizer, train_cfg: TrainConfig, epoch: int, step: int) -> Path:
    sections = {f"param/{k}": v.float() for k, v in net.state_dict().items()}
    sections.update(_optimizer_sections(optimizer))
    header = {
        "config": net.config.to_dict(),
        "metadata": {"epoch": epoch, "step": step, "provider": train_cfg.provider, "train": asdict(train_cfg)},
    }
    write_param_file(path, header, sections)
    return Path(path)


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_COLUMNS)
        for row in rows:
            writer.writerow([row["step"]] + [repr(float(row[k])) for k in LOSS_COLUMNS[1:]])


def read_loss_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {"step": int(r["step"]), **{k: float(r[k]) for k in LOSS_COLUMNS[1:]}}
            for r in csv.DictReader(fh)
        ]


def train(
    net_config: NetworkConfig,
    train_cfg: TrainConfig,
    dataset: Sequence[DegradedSample],
    out_dir: str | Path,
    resume: str | Path | None = None,
    provider: EmbeddingProvider | None = None,
) -> TrainResult:
    """Run the epoch loop and write ``final.gd2`` and ``losses.csv`` into ``out_dir``.

    Shuffling and crop offsets are keyed by (seed, epoch) and (seed, step),
    so resuming from an epoch checkpoint replays the same batches an
    uninterrupted run would have seen.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if train_cfg.patch % net_config.grid:
        raise ValueError(f"patch {train_cfg.patch} must be a multiple of {net_config.grid} (2 x window)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    provider = provider or make_provider(train_cfg.provider, net_config.prompt_dim)

    start_epoch, step = 0, 0
    if resume is not None:
        header, sections = read_param_file(resume)
        net = network_from_sections(header, sections, net_config, resume)
        optimizer = make_optimizer(net, train_cfg.lr)
        _restore_optimizer(optimizer, sections)
        start_epoch = int(header["metadata"]["epoch"])
        step = int(header["metadata"]["step"])
    else:
        torch.manual_seed(train_cfg.seed)
        net = GD2FusionNet(net_config)
        optimizer = make_optimizer(net, train_cfg.lr)

    prompts = [prompt_batch([s], provider) for s in dataset]
    loss_cfg = train_cfg.loss
    n = len(dataset)
    steps_per_epoch = math.ceil(n / train_cfg.batch)
    csv_path = out / "losses.csv"
    history: list[dict] = []
    if resume is not None and csv_path.exists():
        # keep the rows the interrupted run already logged
        history = [r for r in read_loss_csv(csv_path) if r["step"] <= step]
    final = out / "final.gd2"

    epoch = start_epoch
    done = train_cfg.max_steps is not None and step >= train_cfg.max_steps
    while epoch < train_cfg.epochs and not done:
        order = _rng(train_cfg.seed, epoch).permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * train_cfg.batch : (b + 1) * train_cfg.batch]
            batch = crop_batch([dataset[i] for i in idx], train_cfg.patch, _rng(train_cfg.seed, step, 1))
            p_ir = torch.cat([prompts[i][0] for i in idx])
            p_vi = torch.cat([prompts[i][1] for i in idx])
            step += 1
            report = train_step(net, optimizer, batch, p_ir, p_vi, loss_cfg, step)
            history.append({"step": step, **report.as_floats()})
            if step % 50 == 0:
                log.info("step %d total %.5f", step, history[-1]["total"])
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
        epoch += 1
        if train_cfg.checkpoint_every and epoch % train_cfg.checkpoint_every == 0 and not done:
            save_training_checkpoint(out / f"epoch_{epoch:04d}.gd2", net, optimizer, train_cfg, epoch, step)
            _write_rows(csv_path, history)

    save_training_checkpoint(final, net, optimizer, train_cfg, epoch, step)
    _write_rows(csv_path, history)
    net.eval()
    return TrainResult(final, csv_path, history, net)
