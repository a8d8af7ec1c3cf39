"""Model bundle: every trainable piece plus pooled stats, with eval helpers.

The bundle owns two backbone instances: one feeding the style encoder
(frozen together with it after stage 1) and one feeding the compatibility
network (its tail keeps training in stage 2).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .compat_net import CATEGORY_INDEX, CompatConfig, SubspaceEmbedder
from .data import Catalog, Outfit, StyleLabel
from .encoders import EncoderConfig, batch_tensor, build_encoder
from .style_encoder import (
    PooledStyleStats,
    StyleClassifier,
    StyleEncoderConfig,
    StyleEncoderNet,
    StyleRepBuilder,
    StyleRepConfig,
    classify,
    rep_config_by_name,
)


@dataclass
class ModelBundle:
    senet_encoder: torch.nn.Module
    senet: StyleEncoderNet
    classifier: StyleClassifier
    compat_encoder: torch.nn.Module
    embedder: SubspaceEmbedder
    rep_builder: StyleRepBuilder
    style_labels: list[StyleLabel]
    senet_encoder_config: EncoderConfig
    compat_encoder_config: EncoderConfig
    senet_config: StyleEncoderConfig
    compat_config: CompatConfig
    rep_config: StyleRepConfig
    pooled: PooledStyleStats | None = None
    has_compat: bool = False

    @property
    def d_s(self) -> int:
        return self.senet_config.d_s

    @property
    def style_names(self) -> list[str]:
        return [l.name for l in self.style_labels]

    def style_index(self, name: str) -> int:
        for label in self.style_labels:
            if label.name == name:
                return label.index
        raise ValueError(f"unknown style {name!r}")

    def eval_mode(self) -> "ModelBundle":
        for m in (self.senet_encoder, self.senet, self.classifier, self.compat_encoder, self.embedder):
            m.eval()
        return self

    # ---- style-space helpers (frozen-model inference) ----

    @torch.no_grad()
    def outfit_distribution(self, item_ids: Sequence[str], catalog: Catalog) -> tuple[np.ndarray, np.ndarray]:
        """(mu, var) of one outfit's style Gaussian, as float64 arrays."""
        items = [catalog[i] for i in sorted(item_ids)]
        feats = self.senet_encoder(batch_tensor(items, catalog))
        mu, logvar = self.senet(feats.unsqueeze(0))
        return (
            mu[0].double().numpy(),
            logvar[0].double().exp().numpy(),
        )

    def _pooled_arrays(self, style_name: str) -> tuple[np.ndarray, np.ndarray]:
        if style_name not in self.style_names:
            raise ValueError(f"unknown style {style_name!r}")
        if self.pooled is None:
            raise ValueError("pooled style stats not computed yet")
        if style_name not in self.pooled.means:
            raise ValueError(f"style {style_name!r} has no pooled stats")
        return (
            np.asarray(self.pooled.means[style_name], np.float64),
            np.asarray(self.pooled.variances[style_name], np.float64),
        )

    @torch.no_grad()
    def rep_for_outfit(
        self,
        outfit: Outfit,
        catalog: Catalog,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Style representation of an outfit given its own distribution.

        Sample-based presets draw through ``rng`` when given and otherwise
        use the distribution mean, keeping evaluation deterministic.
        """
        mu, var = self.outfit_distribution(outfit.sorted_items(), catalog)
        pooled_mu = pooled_var = None
        cfg = self.rep_config
        if cfg.lam_global_mean != 0.0 or cfg.lam_global_var != 0.0:
            pooled_mu, pooled_var = self._pooled_arrays(outfit.style.name)
        sample = None
        if cfg.needs_sample():
            sample = mu if rng is None else mu + np.sqrt(var) * rng.standard_normal(mu.shape)
        r = self.rep_builder.from_outfit(
            mu=torch.from_numpy(mu),
            var=torch.from_numpy(var),
            pooled_mu=None if pooled_mu is None else torch.from_numpy(pooled_mu),
            pooled_var=None if pooled_var is None else torch.from_numpy(pooled_var),
            sample=None if sample is None else torch.from_numpy(sample),
        )
        return r.double().numpy()

    @torch.no_grad()
    def rep_for_style(self, style_name: str, rng: np.random.Generator | None = None) -> np.ndarray:
        """Pooled-fallback style representation for one style."""
        if style_name not in self.style_names:
            raise ValueError(f"unknown style {style_name!r}")
        if self.rep_config.is_null():
            return np.zeros(2 * self.d_s, dtype=np.float64)
        pooled_mu, pooled_var = self._pooled_arrays(style_name)
        sample = None
        if self.rep_config.needs_sample() and rng is not None:
            sample = pooled_mu + np.sqrt(pooled_var) * rng.standard_normal(pooled_mu.shape)
        r = self.rep_builder.from_pooled(
            pooled_mu=torch.from_numpy(pooled_mu),
            pooled_var=torch.from_numpy(pooled_var),
            sample=None if sample is None else torch.from_numpy(sample),
        )
        return r.double().numpy()

    @torch.no_grad()
    def classify_items(self, item_ids: Sequence[str], catalog: Catalog) -> str:
        """Style name the classifier assigns to an item set."""
        items = [catalog[i] for i in sorted(item_ids)]
        feats = self.senet_encoder(batch_tensor(items, catalog))
        mu, logvar = self.senet(feats.unsqueeze(0))
        if self.rep_config.classifier_input == "sample":
            inp = mu  # deterministic stand-in for a sample at eval time
        else:
            inp = torch.cat([mu, logvar.exp()], dim=-1)
        probs = classify(inp, self.classifier)[0]
        return self.style_labels[int(probs.argmax())].name

    @torch.no_grad()
    def embed_catalog(self, catalog: Catalog) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Compat-space embeddings for the full catalog (ids, X, category idx)."""
        self.compat_encoder.eval()
        ids = catalog.ids()
        items = [catalog[i] for i in ids]
        X = self.compat_encoder(batch_tensor(items, catalog)).double().numpy()
        cats = np.array([CATEGORY_INDEX[catalog[i].category.high] for i in ids], dtype=np.intp)
        return ids, X, cats


def build_bundle(
    catalog: Catalog,
    style_labels: Sequence[StyleLabel],
    rep_preset: str = "params",
    d_s: int = 64,
    d_z: int = 32,
    n_heads: int = 2,
    n_subspaces: int = 5,
    margin: float = 0.3,
    seed: int = 0,
) -> ModelBundle:
    """Fresh bundle sized for a catalog; all init drawn from ``seed``."""
    if len(style_labels) < 2:
        raise ValueError("need at least 2 styles")
    torch.manual_seed(seed)
    if catalog.feature_dim is not None:
        enc_cfg = EncoderConfig(kind="identity_linear", d_in=catalog.feature_dim, d_s=d_s)
    else:
        enc_cfg = EncoderConfig(kind="tiny_cnn", d_in=0, d_s=d_s)
    rep_cfg = rep_config_by_name(rep_preset)
    senet_cfg = StyleEncoderConfig(d_s=d_s, d_z=d_z, n_heads=n_heads, n_styles=len(style_labels))
    compat_cfg = CompatConfig(d_s=d_s, n_subspaces=n_subspaces, margin=margin)
    cls_in = d_s if rep_cfg.classifier_input == "sample" else 2 * d_s
    rep_builder = StyleRepBuilder(rep_cfg, d_s)
    return ModelBundle(
        senet_encoder=build_encoder(enc_cfg),
        senet=StyleEncoderNet(senet_cfg),
        classifier=StyleClassifier(cls_in, senet_cfg.classifier_hidden, len(style_labels)),
        compat_encoder=build_encoder(enc_cfg),
        embedder=SubspaceEmbedder(compat_cfg, rep_builder.rep_dim()),
        rep_builder=rep_builder,
        style_labels=list(style_labels),
        senet_encoder_config=enc_cfg,
        compat_encoder_config=enc_cfg,
        senet_config=senet_cfg,
        compat_config=compat_cfg,
        rep_config=rep_cfg,
    )
