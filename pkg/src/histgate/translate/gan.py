"""Cycle-consistent unpaired image translation.

A pair of small residual encoder-decoder generators is trained adversarially
(least-squares GAN) on unpaired source and target images, tied together by a
cycle loss: translating source -> target -> source (and the reverse loop) must
recover the original image under an L1 pixel norm. Networks are sized for
CPU-scale experiments; the translation contract (shape and id preservation,
masks untouched) is what the rest of the pipeline relies on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..imagecore import DatasetSplit, GrayImage

BACKENDS = ("cyclegan", "hist-match", "fda")

__all__ = [
    "BACKENDS",
    "TrainingDivergedError",
    "TranslationConfig",
    "TranslatorModel",
    "ResnetGenerator",
    "PatchDiscriminator",
    "cycle_loss",
    "train_translator",
    "apply_translator",
]


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TranslationConfig:
    """Knobs shared by the translation backends."""

    backend: str = "cyclegan"
    epochs: int = 10
    batch_size: int = 4
    lambda_cyc: float = 10.0
    fda_beta: float = 0.05
    learning_rate: float = 2e-4
    seed: int = 0

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.backend == "cyclegan" and self.epochs < 1:
            raise ValueError("cyclegan requires epochs >= 1")
        if self.backend == "fda" and not 0.0 < self.fda_beta <= 0.5:
            raise ValueError("fda requires fda_beta in (0, 0.5]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lambda_cyc < 0:
            raise ValueError("lambda_cyc must be non-negative")


def _pad_to_multiple(x: torch.Tensor, multiple: int) -> tuple[torch.Tensor, int, int]:
    h, w = x.shape[-2:]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
    return x, pad_h, pad_w


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class ResnetGenerator(nn.Module):
    """Residual encoder-decoder mapping [0,1] images to [0,1] images.

    Two stride-2 downsamples, a residual trunk, two upsamples, and a tanh head
    rescaled to [0, 1] so outputs are bounded by construction.
    """

    def __init__(self, base_channels: int = 16, n_blocks: int = 2):
        super().__init__()
        c = base_channels
        self.net = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(1, c, 7),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1),
            nn.InstanceNorm2d(4 * c),
            nn.ReLU(inplace=True),
            *[ResidualBlock(4 * c) for _ in range(n_blocks)],
            nn.ConvTranspose2d(4 * c, 2 * c, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * c, c, 4, stride=2, padding=1),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(3),
            nn.Conv2d(c, 1, 7),
            nn.Tanh(),
        )

    def forward(self, x):
        x, pad_h, pad_w = _pad_to_multiple(x, 4)
        y = self.net(x * 2.0 - 1.0) * 0.5 + 0.5
        if pad_h or pad_w:
            y = y[..., : y.shape[-2] - pad_h, : y.shape[-1] - pad_w]
        return y


class PatchDiscriminator(nn.Module):
    """Small patch classifier scoring local realism."""

    def __init__(self, base_channels: int = 16):
        super().__init__()
        c = base_channels
        self.net = nn.Sequential(
            nn.Conv2d(1, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * c, 4 * c, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(4 * c, 1, 4, padding=1),
        )

    def forward(self, x):
        return self.net(x * 2.0 - 1.0)


@dataclass
class TranslatorModel:
    """Paired generators (and their discriminators) with a training log."""

    source_to_target: nn.Module
    target_to_source: nn.Module
    disc_source: nn.Module | None = None
    disc_target: nn.Module | None = None
    training_log: list[dict] = field(default_factory=list)
    arch: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        if not self.arch:
            raise ValueError("only translators built by train_translator can be serialized")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "arch": self.arch,
            "source_to_target": self.source_to_target.state_dict(),
            "target_to_source": self.target_to_source.state_dict(),
            "disc_source": None if self.disc_source is None else self.disc_source.state_dict(),
            "disc_target": None if self.disc_target is None else self.disc_target.state_dict(),
            "training_log": self.training_log,
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path: str | Path) -> "TranslatorModel":
        payload = torch.load(Path(path), map_location="cpu", weights_only=True)
        arch = payload["arch"]
        g_st = ResnetGenerator(arch["base_channels"], arch["n_blocks"])
        g_ts = ResnetGenerator(arch["base_channels"], arch["n_blocks"])
        g_st.load_state_dict(payload["source_to_target"])
        g_ts.load_state_dict(payload["target_to_source"])
        d_s = d_t = None
        if payload["disc_source"] is not None:
            d_s = PatchDiscriminator(arch["base_channels"])
            d_s.load_state_dict(payload["disc_source"])
        if payload["disc_target"] is not None:
            d_t = PatchDiscriminator(arch["base_channels"])
            d_t.load_state_dict(payload["disc_target"])
        return cls(
            source_to_target=g_st,
            target_to_source=g_ts,
            disc_source=d_s,
            disc_target=d_t,
            training_log=list(payload["training_log"]),
            arch=dict(arch),
        )


def _to_batch(batch) -> torch.Tensor:
    """Accept a (B,H,W) array, list of GrayImage, or tensor; yield float32 (B,1,H,W)."""
    if isinstance(batch, torch.Tensor):
        arr = batch.detach().cpu().numpy()
    elif isinstance(batch, (list, tuple)):
        if not batch:
            raise ValueError("batch is empty")
        arr = np.stack([im.pixels if isinstance(im, GrayImage) else np.asarray(im) for im in batch])
    else:
        arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise ValueError(f"expected a non-empty (B, H, W) batch, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr)).float().unsqueeze(1)


def cycle_loss(source_batch, target_batch, model: TranslatorModel) -> float:
    """Mean L1 reconstruction error of the two translation round trips."""
    xs = _to_batch(source_batch)
    xt = _to_batch(target_batch)
    with torch.no_grad():
        back = model.target_to_source(model.source_to_target(xs))
        fwd = model.source_to_target(model.target_to_source(xt))
        if back.shape != xs.shape or fwd.shape != xt.shape:
            raise ValueError("generator output shape does not match its input")
        loss = (xs - back).abs().mean() + (xt - fwd).abs().mean()
    return float(loss)


def _set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def _epoch_indices(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    reps = math.ceil(count / n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:count]


def train_translator(
    source: DatasetSplit,
    target: DatasetSplit,
    cfg: TranslationConfig,
    base_channels: int = 16,
    n_blocks: int = 2,
    verbose: bool = False,
) -> TranslatorModel:
    """Train the generator pair on unpaired source/target images (masks unused)."""
    if cfg.backend != "cyclegan":
        raise ValueError(f"train_translator handles the cyclegan backend, not {cfg.backend!r}")
    if len(source) == 0 or len(target) == 0:
        raise ValueError("source and target splits must be non-empty")
    for split in (source, target):
        if split.role.endswith("-test"):
            raise ValueError(f"refusing to train on a test split (role {split.role!r})")

    torch.manual_seed(cfg.seed)
    g_st = ResnetGenerator(base_channels, n_blocks)
    g_ts = ResnetGenerator(base_channels, n_blocks)
    d_s = PatchDiscriminator(base_channels)
    d_t = PatchDiscriminator(base_channels)
    opt_g = torch.optim.Adam(
        itertools.chain(g_st.parameters(), g_ts.parameters()), lr=cfg.learning_rate, betas=(0.5, 0.999)
    )
    opt_d = torch.optim.Adam(
        itertools.chain(d_s.parameters(), d_t.parameters()), lr=cfg.learning_rate, betas=(0.5, 0.999)
    )
    mse = nn.MSELoss()
    l1 = nn.L1Loss()

    xs_all = _to_batch(source.images)
    xt_all = _to_batch(target.images)
    rng = np.random.default_rng(cfg.seed)
    steps = math.ceil(max(len(source), len(target)) / cfg.batch_size)

    log: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        order_s = _epoch_indices(rng, len(source), steps * cfg.batch_size)
        order_t = _epoch_indices(rng, len(target), steps * cfg.batch_size)
        sums = {"gen_loss": 0.0, "disc_loss": 0.0, "cycle_loss": 0.0}
        for step in range(steps):
            lo = step * cfg.batch_size
            xs = xs_all[order_s[lo : lo + cfg.batch_size]]
            xt = xt_all[order_t[lo : lo + cfg.batch_size]]

            # generator step (discriminator weights frozen, gradients still flow through)
            _set_requires_grad(d_s, False)
            _set_requires_grad(d_t, False)
            opt_g.zero_grad()
            fake_t = g_st(xs)
            fake_s = g_ts(xt)
            pred_t = d_t(fake_t)
            pred_s = d_s(fake_s)
            adv = mse(pred_t, torch.ones_like(pred_t)) + mse(pred_s, torch.ones_like(pred_s))
            cyc = l1(g_ts(fake_t), xs) + l1(g_st(fake_s), xt)
            loss_g = adv + cfg.lambda_cyc * cyc
            loss_g.backward()
            opt_g.step()

            # discriminator step on real vs freshly generated fakes
            _set_requires_grad(d_s, True)
            _set_requires_grad(d_t, True)
            opt_d.zero_grad()
            real_t = d_t(xt)
            real_s = d_s(xs)
            fake_t_pred = d_t(fake_t.detach())
            fake_s_pred = d_s(fake_s.detach())
            loss_d = 0.5 * (
                mse(real_t, torch.ones_like(real_t))
                + mse(fake_t_pred, torch.zeros_like(fake_t_pred))
                + mse(real_s, torch.ones_like(real_s))
                + mse(fake_s_pred, torch.zeros_like(fake_s_pred))
            )
            loss_d.backward()
            opt_d.step()

            sums["gen_loss"] += loss_g.item()
            sums["disc_loss"] += loss_d.item()
            sums["cycle_loss"] += cyc.item()

        entry = {"epoch": epoch, **{k: v / steps for k, v in sums.items()}}
        if not all(math.isfinite(v) for v in entry.values()):
            raise TrainingDivergedError(f"translation training diverged at epoch {epoch}")
        log.append(entry)
        if verbose:
            print(
                f"  epoch {epoch:3d}  gen {entry['gen_loss']:.4f}  "
                f"disc {entry['disc_loss']:.4f}  cycle {entry['cycle_loss']:.4f}"
            )

    return TranslatorModel(
        source_to_target=g_st,
        target_to_source=g_ts,
        disc_source=d_s,
        disc_target=d_t,
        training_log=log,
        arch={"base_channels": base_channels, "n_blocks": n_blocks},
    )


def apply_translator(split: DatasetSplit, model: TranslatorModel, batch_size: int = 16) -> DatasetSplit:
    """Translate every image in the split; ids and masks are carried through."""
    net = model.source_to_target
    net.eval()
    out_images: list[GrayImage] = []
    with torch.no_grad():
        for lo in range(0, len(split), batch_size):
            chunk = split.images[lo : lo + batch_size]
            x = _to_batch(chunk)
            y = net(x)
            if y.shape != x.shape:
                raise ValueError("generator output shape does not match its input")
            arr = y.squeeze(1).numpy().astype(np.float64)
            out_images.extend(GrayImage(np.clip(a, 0.0, 1.0)) for a in arr)
    return split.with_images(out_images)
