import time

import numpy as np
import pytest
import torch

from stylecompat.data import Split, build_style_labels
from stylecompat.synth import GenConfig, generate

# Desk-scale end-to-end configuration shared by the acceptance suite and the
# trained-model example tests: ~5K outfits, 4 styles, vector mode. Learning
# rates are raised from the built-in defaults, which assume fine-tuning a
# pretrained backbone on a far larger corpus; from-scratch training at this
# scale needs larger steps to converge inside the time budget.
DATA_CONFIG = dict(
    n_outfits=5000,
    m_styles=4,
    n_high_categories=4,
    fines_per_high=6,
    items_per_fine=16,
    d_f=16,
    noise_scale=0.3,
    cross_style_rate=0.10,
    seed=7,
)
TRAIN_CONFIG = dict(
    stage1=dict(lr=1e-3, batch_size=128, epochs=15, alpha_kl=0.05),
    stage2=dict(lr=1e-3, batch_size=32, epochs=25, alpha_compat=1.0,
                alpha_stylecompat=0.5, n_neg=10, neg_aggregate="min",
                pooled_rep_rate=0.7),
    seed=1,
)


@pytest.fixture(scope="session")
def small_dataset():
    """Small planted dataset shared by read-only tests."""
    config = GenConfig(n_outfits=400, n_high_categories=4, fines_per_high=4,
                       items_per_fine=16, d_f=16, seed=7)
    catalog, outfits, planted = generate(config)
    return catalog, outfits, planted


@pytest.fixture(scope="session")
def small_labels(small_dataset):
    _, outfits, _ = small_dataset
    return build_style_labels(outfits)


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)
    np.random.seed(0)
    yield


class E2E:
    """Shared end-to-end pipeline artifacts (trained model + ablation)."""

    def __init__(self):
        from stylecompat.checkpoint import load_checkpoint, save_checkpoint
        from stylecompat.metrics import compat_auroc, fitb
        from stylecompat.model import build_bundle
        from stylecompat.scoring import FrozenScorer
        from stylecompat.style_encoder import StyleRepBuilder, rep_config_by_name
        from stylecompat.training import (
            Stage1Config,
            Stage2Config,
            TrainConfig,
            compute_pooled,
            train_stage1,
            train_stage2,
        )

        t0 = time.time()
        config = GenConfig(**DATA_CONFIG)
        self.catalog, self.outfits, self.planted = generate(config)
        labels = build_style_labels(self.outfits)
        tc = TrainConfig(
            stage1=Stage1Config(**TRAIN_CONFIG["stage1"]),
            stage2=Stage2Config(**TRAIN_CONFIG["stage2"]),
            seed=TRAIN_CONFIG["seed"],
        )
        self.bundle = build_bundle(self.catalog, labels, rep_preset="params", seed=tc.seed)
        self.stage1_log = train_stage1(self.bundle, self.catalog, self.outfits, tc)
        compute_pooled(self.bundle, self.catalog, self.outfits)
        self.stage2_log = train_stage2(self.bundle, self.catalog, self.outfits, tc)
        self.scorer = FrozenScorer.from_bundle(self.bundle, self.catalog)
        self.test = [o for o in self.outfits if o.split == Split.TEST]
        self.train = [o for o in self.outfits if o.split == Split.TRAIN]

        rep = lambda o: self.bundle.rep_for_outfit(o, self.catalog)
        self.fitb_soft = fitb(self.scorer, rep, self.catalog, self.test, "soft", replications=5, seed=0)
        self.fitb_hard = fitb(self.scorer, rep, self.catalog, self.test, "hard", replications=5, seed=0)
        self.auroc_soft = compat_auroc(self.scorer, rep, self.catalog, self.test, "soft", replications=5, seed=0)
        self.auroc_hard = compat_auroc(self.scorer, rep, self.catalog, self.test, "hard", replications=5, seed=0)
        self.test_accuracy = self._stage1_test_accuracy()
        self.elapsed_primary = time.time() - t0

        # style-independent ablation: same stage-1 weights, stage 2 retrained
        # with an identically configured run whose representation is zero
        import tempfile

        with tempfile.TemporaryDirectory() as td:
            save_checkpoint(self.bundle, td + "/s1.ckpt")
            self.ablation = load_checkpoint(td + "/s1.ckpt")
        self.ablation.has_compat = False
        self.ablation.rep_config = rep_config_by_name("none")
        self.ablation.rep_builder = StyleRepBuilder(self.ablation.rep_config, self.ablation.senet_config.d_s)
        train_stage2(self.ablation, self.catalog, self.outfits, tc)
        self.scorer_ablation = FrozenScorer.from_bundle(self.ablation, self.catalog)

    def _stage1_test_accuracy(self) -> float:
        from stylecompat.training import _valid_accuracy

        return _valid_accuracy(self.bundle, self.catalog, self.test, 256)


@pytest.fixture(scope="session")
def e2e():
    return E2E()
