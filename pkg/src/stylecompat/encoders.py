"""Feature backbones mapping catalog items to vectors in R^{d_s}.

Two kinds: a linear map for vector-mode catalogs and a small CNN for
image-mode catalogs. Both expose a "tail" (the part that keeps training
during compatibility learning) while any earlier layers stay frozen.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import torch
from torch import nn

from .data import Catalog, Item


@dataclass
class EncoderConfig:
    kind: Literal["identity_linear", "tiny_cnn"] = "identity_linear"
    d_in: int = 16
    d_s: int = 64
    trainable_tail: bool = True

    def validate(self) -> None:
        if self.d_s <= 0:
            raise ValueError("d_s must be positive")
        if self.kind == "identity_linear" and self.d_in <= 0:
            raise ValueError("identity_linear requires a positive input dim")
        if self.kind not in ("identity_linear", "tiny_cnn"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")


class LinearEncoder(nn.Module):
    """Single linear layer; the whole layer is the trainable tail."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.proj = nn.Linear(config.d_in, config.d_s)
        if not config.trainable_tail:
            self.proj.requires_grad_(False)

    def init_identity(self) -> "LinearEncoder":
        if self.config.d_in != self.config.d_s:
            raise ValueError("identity init requires d_in == d_s")
        with torch.no_grad():
            self.proj.weight.copy_(torch.eye(self.config.d_s))
            self.proj.bias.zero_()
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.config.d_in:
            raise ValueError(f"expected input dim {self.config.d_in}, got {x.shape[-1]}")
        return self.proj(x)

    def tail_parameters(self):
        return list(self.proj.parameters())


class TinyCnnEncoder(nn.Module):
    """Three stride-2 conv blocks over 16x16 inputs, then GAP and a linear head.

    The last conv block plus the head form the trainable tail; the first two
    blocks are frozen at their random initialization.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.frozen = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.tail_conv = nn.Sequential(
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.head = nn.Linear(64, config.d_s)
        self.frozen.requires_grad_(False)
        if not config.trainable_tail:
            self.tail_conv.requires_grad_(False)
            self.head.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (n, 3, h, w) image batch, got {tuple(x.shape)}")
        z = self.frozen(x)
        z = self.tail_conv(z)
        z = z.mean(dim=(2, 3))
        return self.head(z)

    def tail_parameters(self):
        return list(self.tail_conv.parameters()) + list(self.head.parameters())


def build_encoder(config: EncoderConfig) -> nn.Module:
    if config.kind == "identity_linear":
        return LinearEncoder(config)
    return TinyCnnEncoder(config)


def item_tensor(item: Item, catalog: Catalog) -> torch.Tensor:
    """Raw model input for one item: its feature vector or its decoded image."""
    if item.features is not None:
        return torch.from_numpy(np.asarray(item.features, dtype=np.float32))
    if catalog.base_dir is None:
        raise ValueError(f"catalog has no base_dir to resolve image for item {item.id!r}")
    from PIL import Image, UnidentifiedImageError

    path = catalog.base_dir / item.image
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise ValueError(f"cannot decode image for item {item.id!r}: {exc}") from exc
    return torch.from_numpy(arr).permute(2, 0, 1)


def batch_tensor(items: Sequence[Item], catalog: Catalog) -> torch.Tensor:
    if not items:
        raise ValueError("empty item batch")
    return torch.stack([item_tensor(it, catalog) for it in items])


@torch.no_grad()
def encode(encoder: nn.Module, item: Item, catalog: Catalog) -> torch.Tensor:
    encoder.eval()
    out = encoder(batch_tensor([item], catalog))[0]
    if not torch.isfinite(out).all():
        raise ValueError(f"non-finite encoding for item {item.id!r}")
    return out


@torch.no_grad()
def encode_batch(encoder: nn.Module, items: Sequence[Item], catalog: Catalog) -> torch.Tensor:
    encoder.eval()
    return encoder(batch_tensor(items, catalog))
