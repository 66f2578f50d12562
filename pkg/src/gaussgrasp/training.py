"""Smooth-L1 objective over the four grasp maps and the training loop."""

from __future__ import annotations

import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .data.dataset import GraspDataset, sample_seed
from .evaluation import EvalReport, MatchCriteria, evaluate
from .grasp_core import GaussianEncoderConfig, GraspMaps, encode_grasp_maps
from .network import GraspNet

log = logging.getLogger(__name__)

HEADS = ("quality", "cos2theta", "sin2theta", "width")


class TrainingError(RuntimeError):
    pass


@dataclass
class LossConfig:
    sigma: float = 1.0
    head_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        self.head_weights = tuple(float(w) for w in self.head_weights)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if len(self.head_weights) != 4 or min(self.head_weights) < 0:
            raise ValueError("head_weights must be four non-negative numbers")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 50
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    # None: augment Cornell, leave Jacquard untouched
    augment: Optional[bool] = None
    # stop once validation accuracy reaches this value
    stop_at_accuracy: Optional[float] = None
    keep_all_checkpoints: bool = False
    smooth_sigma: float = 2.0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def smooth_l1(x, sigma: float = 1.0):
    """``(sigma*x)^2 / 2`` where ``|x| < 1/sigma^2``, else ``|x| - 0.5/sigma^2``.

    The switch point keeps the two pieces continuous for any sigma; at
    sigma = 1 it is the usual ``|x| < 1``. Works element-wise on floats,
    numpy arrays and torch tensors.
    """
    knee = 1.0 / sigma ** 2
    if isinstance(x, torch.Tensor):
        ax = x.abs()
        return torch.where(ax < knee, 0.5 * (sigma * x) ** 2, ax - 0.5 * knee)
    if np.ndim(x) == 0:
        ax = abs(float(x))
        return 0.5 * (sigma * float(x)) ** 2 if ax < knee else ax - 0.5 * knee
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax < knee, 0.5 * (sigma * x) ** 2, ax - 0.5 * knee)


MapsLike = Union[GraspMaps, torch.Tensor, np.ndarray]


def _as_stack(maps: MapsLike) -> torch.Tensor:
    if isinstance(maps, GraspMaps):
        maps = maps.stack()
    t = torch.as_tensor(maps)
    if t.dim() == 3:
        t = t.unsqueeze(0)
    if t.dim() != 4 or t.shape[1] != 4:
        raise ValueError(f"expected (B, 4, H, W) maps, got {tuple(t.shape)}")
    return t


def grasp_loss(pred: MapsLike, target: MapsLike, cfg: Optional[LossConfig] = None) -> torch.Tensor:
    """Weighted sum over heads of the per-head mean Smooth-L1 error.

    Accepts :class:`GraspMaps` or ``(B, 4, H, W)`` arrays/tensors; gradients
    flow through tensor predictions.
    """
    cfg = cfg or LossConfig()
    p, t = _as_stack(pred), _as_stack(target)
    if p.shape != t.shape:
        raise ValueError(f"prediction {tuple(p.shape)} and target {tuple(t.shape)} shapes differ")
    t = t.to(p.dtype)
    per_head = smooth_l1(p - t, cfg.sigma).mean(dim=(0, 2, 3))
    weights = torch.tensor(cfg.head_weights, dtype=p.dtype)
    return (per_head * weights).sum()


def encode_target(rects, cfg: GaussianEncoderConfig, size: int) -> np.ndarray:
    return encode_grasp_maps(rects, cfg, (size, size)).stack().astype(np.float32)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: Optional[float]
    val_accuracy: Optional[float]
    wall_time: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_checkpoint: Optional[Path] = None
    last_checkpoint: Optional[Path] = None
    best_accuracy: Optional[float] = None
    final_report: Optional[EvalReport] = None


def train(net: GraspNet, dataset: GraspDataset, splits: tuple[Sequence[str], Sequence[str]],
          train_cfg: TrainConfig, loss_cfg: Optional[LossConfig] = None,
          encoder_cfg: Optional[GaussianEncoderConfig] = None, out_dir=None,
          crit: Optional[MatchCriteria] = None, checkpoint_extra: Optional[dict] = None) -> TrainResult:
    """Train ``net`` on ``splits[0]``, validating on ``splits[1]`` every epoch.

    Writes ``metrics.jsonl`` and checkpoints under ``out_dir`` when given:
    ``checkpoints/epoch_NNN`` (only the latest kept unless
    ``keep_all_checkpoints``) and ``checkpoints/best``. Epoch 0 is the
    untrained initial state.
    """
    loss_cfg = loss_cfg or LossConfig()
    encoder_cfg = encoder_cfg or GaussianEncoderConfig()
    crit = crit or MatchCriteria()
    train_ids, val_ids = list(splits[0]), list(splits[1])
    if not train_ids:
        raise TrainingError("training split is empty")
    augment = train_cfg.augment
    if augment is None:
        augment = dataset.augment_spec is not None
    size = dataset.input_spec.size

    torch.manual_seed(train_cfg.seed)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=train_cfg.learning_rate, betas=train_cfg.betas)
    dtype = next(net.parameters()).dtype

    out = Path(out_dir) if out_dir is not None else None
    ckpt_dir = metrics_path = None
    if out is not None:
        ckpt_dir = out / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.jsonl"
        metrics_path.write_text("")
    extra = dict(checkpoint_extra or {})

    result = TrainResult()
    target_cache: dict[str, np.ndarray] = {}
    start = time.perf_counter()

    def validate(epoch: int) -> Optional[float]:
        if not val_ids:
            return None
        report = evaluate(net, dataset, val_ids, crit, w_max=encoder_cfg.w_max,
                          smooth_sigma=train_cfg.smooth_sigma)
        net.train()
        result.final_report = report
        return report.accuracy

    def checkpoint(epoch: int, acc: Optional[float]):
        if ckpt_dir is None:
            return
        path = save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}", net, {**extra, "epoch": epoch})
        if not train_cfg.keep_all_checkpoints and result.last_checkpoint not in (None, path):
            shutil.rmtree(result.last_checkpoint, ignore_errors=True)
        result.last_checkpoint = path
        if acc is not None and (result.best_accuracy is None or acc > result.best_accuracy):
            result.best_accuracy = acc
            result.best_checkpoint = save_checkpoint(ckpt_dir / "best", net,
                                                     {**extra, "epoch": epoch, "val_accuracy": acc})

    def log_epoch(rec: EpochRecord):
        result.history.append(rec)
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(json.dumps(rec.__dict__) + "\n")

    if train_cfg.epochs == 0:
        acc = validate(0)
        checkpoint(0, acc)
        log_epoch(EpochRecord(0, None, acc, time.perf_counter() - start))
        return result

    for epoch in range(1, train_cfg.epochs + 1):
        order = np.random.default_rng(sample_seed(train_cfg.seed, "shuffle", epoch)).permutation(len(train_ids))
        losses = []
        for b in range(0, len(order), train_cfg.batch_size):
            batch_ids = [train_ids[i] for i in order[b:b + train_cfg.batch_size]]
            images, targets = [], []
            for sid in batch_ids:
                if augment:
                    img, rects = dataset.get(sid, epoch)
                    tgt = encode_target(rects, encoder_cfg, size)
                else:
                    img, rects = dataset.get(sid)
                    if sid not in target_cache:
                        target_cache[sid] = encode_target(rects, encoder_cfg, size)
                    tgt = target_cache[sid]
                images.append(img)
                targets.append(tgt)
            x = torch.as_tensor(np.stack(images), dtype=dtype)
            y = torch.as_tensor(np.stack(targets), dtype=dtype)
            opt.zero_grad()
            loss = grasp_loss(net(x), y, loss_cfg)
            if not torch.isfinite(loss):
                if out is not None:
                    (out / "nonfinite_batch.json").write_text(json.dumps({"epoch": epoch, "ids": batch_ids}))
                raise TrainingError(f"non-finite loss at epoch {epoch} on batch {batch_ids}")
            loss.backward()
            opt.step()
            losses.append(loss.item() * len(batch_ids))
        train_loss = float(sum(losses) / len(order))
        acc = validate(epoch)
        log.info("epoch %d loss %.6f val_acc %s", epoch, train_loss, acc)
        checkpoint(epoch, acc)
        log_epoch(EpochRecord(epoch, train_loss, acc, time.perf_counter() - start))
        if train_cfg.stop_at_accuracy is not None and acc is not None and acc >= train_cfg.stop_at_accuracy:
            break
    return result
