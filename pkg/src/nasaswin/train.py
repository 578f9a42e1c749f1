"""SGD training loop with per-sample channel masking."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import checkpoint
from . import functional as F
from .data import DatasetManifest, preprocess_manifest
from .errors import ConfigurationError, TrainingError
from .fusion import apply_mask, sample_mask
from .model import NasaSwin
from .nn import SGD
from .residual import DenoiserSpec
from .tensor import backward

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch: int = 16
    epochs: int = 10
    max_steps: Optional[int] = None  # overrides epochs when set
    seed: int = 0
    cms_enabled: bool = True
    cms_max_subset: int = 3
    momentum: float = 0.0
    weight_decay: float = 0.0
    denoiser: str = "median:3"
    checkpoint_every_epoch: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.lr >= 0:  # lr=0 is allowed as a frozen-parameter dry run
            raise ConfigurationError(f"lr must be non-negative, got {self.lr}")
        if self.batch < 1:
            raise ConfigurationError(f"batch must be at least 1, got {self.batch}")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigurationError("max_steps must be non-negative")
        if not 1 <= self.cms_max_subset <= 6:
            raise ConfigurationError("cms_max_subset must lie in 1..6")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        DenoiserSpec.parse(self.denoiser)

    def to_dict(self) -> Dict[str, str]:
        return {k: ("none" if v is None else str(v).lower() if isinstance(v, bool) else str(v)) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: Dict[str, str]) -> "TrainConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in d.items():
            if key not in types:
                raise ConfigurationError(f"unknown training key {key!r}")
            raw = str(raw).strip()
            kind = types[key]
            if "bool" in kind:
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                    raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")
                kwargs[key] = raw.lower() in ("true", "1", "yes", "on")
            elif key == "max_steps":
                kwargs[key] = None if raw.lower() in ("none", "") else int(raw)
            elif "int" in kind:
                kwargs[key] = int(raw)
            elif "float" in kind:
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        return cls(**kwargs)


@dataclass
class TrainResult:
    model: NasaSwin
    losses: List[float]
    checkpoints: List[Path]
    steps: int


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Sample order for ``epoch``; a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def mask_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, epoch, sample index)."""
    return np.random.default_rng([seed, epoch, index, 0x636D73])


def total_steps(cfg: TrainConfig, n: int) -> int:
    per_epoch = math.ceil(n / cfg.batch)
    return cfg.max_steps if cfg.max_steps is not None else cfg.epochs * per_epoch


def train_arrays(
    model: NasaSwin,
    inputs: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    out_dir=None,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Train on preprocessed [n, 6, h, w] inputs.

    Each epoch walks a fresh seeded permutation in consecutive batches (the
    last one may be short). With ``out_dir`` set, a checkpoint is written at
    the end of every epoch plus ``final.nsw``, and the loss curve goes to
    ``loss_curve.csv``.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(inputs)
    if n == 0:
        raise TrainingError("no training samples")
    if len(labels) != n:
        raise TrainingError(f"{n} inputs but {len(labels)} labels")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    opt = SGD(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay)
    steps = total_steps(cfg, n)
    losses: List[float] = []
    epochs: List[int] = []
    ckpts: List[Path] = []
    step, epoch = 0, 0
    while step < steps:
        order = epoch_order(cfg.seed, epoch, n)
        finished_epoch = True
        for start in range(0, n, cfg.batch):
            if step >= steps:
                finished_epoch = False
                break
            idx = order[start : start + cfg.batch]
            batch = inputs[idx]
            if cfg.cms_enabled:
                batch = np.stack([apply_mask(batch[k], sample_mask(mask_rng(cfg.seed, epoch, int(i)), cfg.cms_max_subset)) for k, i in enumerate(idx)])
            loss = F.cross_entropy(model(batch), labels[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at step {step}")
            backward(loss)
            opt.step()
            losses.append(value)
            epochs.append(epoch)
            if on_step is not None:
                on_step(step, value)
            step += 1
        if out is not None and cfg.checkpoint_every_epoch and finished_epoch:
            path = out / f"epoch_{epoch:03d}.nsw"
            checkpoint.save(path, model.state_with_config())
            ckpts.append(path)
        epoch += 1
    if out is not None:
        final = out / "final.nsw"
        checkpoint.save(final, model.state_with_config())
        ckpts.append(final)
        write_loss_curve(out / "loss_curve.csv", losses, epochs)
    logger.info("trained %d steps, final loss %.4f", step, losses[-1] if losses else float("nan"))
    return TrainResult(model, losses, ckpts, step)


def write_loss_curve(path, losses, epochs=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "epoch", "loss"])
        for i, value in enumerate(losses):
            w.writerow([i, "" if epochs is None else epochs[i], repr(float(value))])


def train(
    model: NasaSwin,
    manifest: DatasetManifest,
    cfg: TrainConfig,
    out_dir=None,
    threads: Optional[int] = None,
) -> TrainResult:
    h, w = model.cfg.input_hw
    if h != w:
        raise ConfigurationError(f"training needs square inputs, got {h}x{w}")
    size = h
    inputs = preprocess_manifest(manifest, size, DenoiserSpec.parse(cfg.denoiser), threads)
    return train_arrays(model, inputs, manifest.labels, cfg, out_dir)
