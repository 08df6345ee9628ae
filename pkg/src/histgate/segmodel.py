"""Small U-Net-style binary segmenter trained with pixel-wise cross entropy.

The network is deliberately tiny (three resolution levels, ~100K parameters)
so CPU training finishes in minutes; the architecture sits behind a
constructor argument so callers can swap capacity. Probabilities are clipped
to [1e-7, 1 - 1e-7] inside the loss for numerical stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imagecore import BinaryMask, DatasetSplit

PROB_EPS = 1e-7

__all__ = [
    "PROB_EPS",
    "TrainingDivergedError",
    "SegTrainConfig",
    "SmallUNet",
    "SegmenterModel",
    "bce_loss",
    "bce_grad",
    "train_segmenter",
    "predict_probs",
    "predict",
]


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class SegTrainConfig:
    epochs: int = 25
    batch_size: int = 8
    learning_rate: float = 1e-3
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


def bce_loss(probs: np.ndarray, masks: np.ndarray) -> float:
    """Mean pixel-wise binary cross entropy with probabilities clipped to [eps, 1-eps]."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(masks, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"probability shape {p.shape} != mask shape {y.shape}")
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))))


def bce_grad(probs: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Analytic gradient of bce_loss w.r.t. the probabilities.

    Zero where the clip is active, matching the piecewise-constant loss there.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(masks, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"probability shape {p.shape} != mask shape {y.shape}")
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    grad = (-y / pc + (1.0 - y) / (1.0 - pc)) / p.size
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    return np.where(inside, grad, 0.0)


def _double_conv(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class SmallUNet(nn.Module):
    """Three-level U-Net with skip connections and a sigmoid probability head."""

    def __init__(self, base_channels: int = 16):
        super().__init__()
        c = base_channels
        self.enc1 = _double_conv(1, c)
        self.enc2 = _double_conv(c, 2 * c)
        self.bottom = _double_conv(2 * c, 4 * c)
        self.pool = nn.MaxPool2d(2)
        self.up2 = nn.ConvTranspose2d(4 * c, 2 * c, 2, stride=2)
        self.dec2 = _double_conv(4 * c, 2 * c)
        self.up1 = nn.ConvTranspose2d(2 * c, c, 2, stride=2)
        self.dec1 = _double_conv(2 * c, c)
        self.head = nn.Conv2d(c, 1, 1)

    def forward(self, x):
        h, w = x.shape[-2:]
        pad_h = (-h) % 4
        pad_w = (-w) % 4
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        b = self.bottom(self.pool(e2))
        d2 = self.dec2(torch.cat([self.up2(b), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        out = torch.sigmoid(self.head(d1))
        if pad_h or pad_w:
            out = out[..., :h, :w]
        return out


@dataclass
class SegmenterModel:
    """Trained segmentation network plus its binarization threshold and log."""

    net: nn.Module
    threshold: float = 0.5
    training_log: list[dict] = field(default_factory=list)
    base_channels: int = 16

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "base_channels": self.base_channels,
                "state_dict": self.net.state_dict(),
                "threshold": self.threshold,
                "training_log": self.training_log,
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "SegmenterModel":
        payload = torch.load(Path(path), map_location="cpu", weights_only=True)
        net = SmallUNet(payload["base_channels"])
        net.load_state_dict(payload["state_dict"])
        return cls(
            net=net,
            threshold=float(payload["threshold"]),
            training_log=list(payload["training_log"]),
            base_channels=int(payload["base_channels"]),
        )


def _split_tensors(split: DatasetSplit) -> tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.stack([im.pixels for im in split.images])).float().unsqueeze(1)
    y = torch.from_numpy(np.stack([m.labels for m in split.masks])).float().unsqueeze(1)
    return x, y


def train_segmenter(
    split: DatasetSplit,
    cfg: SegTrainConfig,
    base_channels: int = 16,
    verbose: bool = False,
) -> SegmenterModel:
    """Fit the segmenter on (image, mask) pairs by minimizing bce_loss."""
    if split.masks is None:
        raise ValueError("training split has no masks")
    if split.role.endswith("-test"):
        raise ValueError(f"refusing to train on a test split (role {split.role!r})")

    torch.manual_seed(cfg.seed)
    net = SmallUNet(base_channels)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    x_all, y_all = _split_tensors(split)
    rng = np.random.default_rng(cfg.seed)

    log: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(split))
        losses = []
        net.train()
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            p = net(xb).clamp(PROB_EPS, 1.0 - PROB_EPS)
            loss = -(yb * p.log() + (1.0 - yb) * (1.0 - p).log()).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        mean_loss = sum(losses) / len(losses)
        if not math.isfinite(mean_loss):
            raise TrainingDivergedError(f"segmenter training diverged at epoch {epoch}")
        net.eval()
        with torch.no_grad():
            correct = 0
            for lo in range(0, len(split), 16):
                pb = net(x_all[lo : lo + 16])
                pred = (pb >= cfg.threshold).float()
                correct += float((pred == y_all[lo : lo + 16]).float().sum())
            train_sa = correct / float(y_all.numel())
        log.append({"epoch": epoch, "loss": mean_loss, "train_sa": train_sa})
        if verbose:
            print(f"  epoch {epoch:3d}  loss {mean_loss:.4f}  train SA {train_sa:.4f}")

    return SegmenterModel(net=net, threshold=cfg.threshold, training_log=log, base_channels=base_channels)


def predict_probs(split: DatasetSplit, model: SegmenterModel, batch_size: int = 16) -> np.ndarray:
    """Per-pixel foreground probabilities, shape (len(split), H, W)."""
    model.net.eval()
    chunks = []
    with torch.no_grad():
        for lo in range(0, len(split), batch_size):
            x = torch.from_numpy(
                np.stack([im.pixels for im in split.images[lo : lo + batch_size]])
            ).float().unsqueeze(1)
            chunks.append(model.net(x).squeeze(1).numpy().astype(np.float64))
    return np.concatenate(chunks, axis=0)


def predict(split: DatasetSplit, model: SegmenterModel, threshold: float | None = None) -> list[BinaryMask]:
    """Binarized predictions (prob >= threshold) in the split's id order."""
    thr = model.threshold if threshold is None else threshold
    probs = predict_probs(split, model)
    return [BinaryMask((p >= thr).astype(np.uint8)) for p in probs]
