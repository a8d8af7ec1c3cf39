"""Style-conditioned outfit generation via beam search over the catalog.

Slots are filled in template order starting from the parent item; partial
outfits are ranked by their running mean pairwise conditional distance.
Style conditioning enters only through the representation vector, which may
be a single pooled style or any linear blend of pooled styles.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Catalog, Template
from .model import ModelBundle
from .scoring import FrozenScorer


class GenerationError(Exception):
    pass


@dataclass
class GenerationRequest:
    parent_id: str
    template: Template
    style_weights: Mapping[str, float]
    beam_width: int = 10
    top_k: int = 10
    sample_seed: int | None = None
    normalize_weights: bool = False

    def validate(self) -> None:
        if self.beam_width < 1:
            raise GenerationError("beam width must be >= 1")
        if self.top_k < 1:
            raise GenerationError("top_k must be >= 1")
        if not self.style_weights:
            raise GenerationError("at least one style weight is required")
        if any(w < 0 for w in self.style_weights.values()):
            raise GenerationError("style weights must be >= 0")
        if all(w == 0 for w in self.style_weights.values()):
            raise GenerationError("all style weights are zero")


@dataclass(frozen=True)
class RankedOutfit:
    items: tuple[str, ...]  # parent first, then template order
    score: float

    def item_set(self) -> frozenset[str]:
        return frozenset(self.items)


def blend_style_rep(
    bundle: ModelBundle,
    style_weights: Mapping[str, float],
    rng: np.random.Generator | None = None,
    normalize: bool = False,
) -> np.ndarray:
    """Weighted sum of pooled style representations.

    Weights are used as given unless ``normalize``; sampling only happens
    when an ``rng`` is supplied, otherwise pooled means stand in for samples.
    """
    if not style_weights:
        raise GenerationError("no style weights given")
    total = float(sum(style_weights.values()))
    if any(w < 0 for w in style_weights.values()) or total <= 0:
        raise GenerationError("style weights must be >= 0 with a positive sum")
    rep = np.zeros(2 * bundle.d_s, dtype=np.float64)
    for name in sorted(style_weights):
        w = float(style_weights[name])
        if w == 0.0:
            continue
        if normalize:
            w /= total
        try:
            rep += w * bundle.rep_for_style(name, rng=rng)
        except ValueError as exc:
            raise GenerationError(str(exc)) from exc
    return rep


def beam_generate(
    request: GenerationRequest,
    bundle: ModelBundle,
    scorer: FrozenScorer,
    catalog: Catalog,
) -> list[RankedOutfit]:
    """Ranked complete outfits for a request; deterministic, ties by item id."""
    request.validate()
    if request.parent_id not in catalog:
        raise GenerationError(f"unknown item {request.parent_id!r}")
    parent = catalog[request.parent_id]
    if parent.category.high not in request.template.slots:
        raise GenerationError(
            f"parent category {parent.category.high.value!r} is not in the template"
        )
    slots = [c for c in request.template if c != parent.category.high]
    if not slots:
        raise GenerationError("template holds only the parent's category; nothing to generate")

    rng = None
    if request.sample_seed is not None:
        rng = np.random.default_rng(request.sample_seed)
    rep = blend_style_rep(bundle, request.style_weights, rng=rng, normalize=request.normalize_weights)

    # beam entries: (items tuple, sum of pairwise distances so far)
    beam: list[tuple[tuple[str, ...], float]] = [((request.parent_id,), 0.0)]
    for slot in slots:
        pool = catalog.by_high(slot)
        extensions: list[tuple[float, tuple[str, ...], float]] = []
        for items, dist_sum in beam:
            used = set(items)
            eligible = [i for i in pool if i not in used]
            if not eligible:
                raise GenerationError(f"no eligible catalog items for slot {slot.value!r}")
            sums = scorer.extension_sums(eligible, list(items), rep)
            k = len(items) + 1
            n_pairs = k * (k - 1) // 2
            for iid, s in zip(eligible, sums):
                new_sum = dist_sum + float(s)
                extensions.append((-new_sum / n_pairs, items + (iid,), new_sum))
        extensions.sort(key=lambda e: (-e[0], e[1]))
        beam = [(items, new_sum) for _, items, new_sum in extensions[: request.beam_width]]

    n_pairs = len(beam[0][0]) * (len(beam[0][0]) - 1) // 2
    ranked = sorted(
        (RankedOutfit(items, -dist_sum / n_pairs) for items, dist_sum in beam),
        key=lambda r: (-r.score, r.items),
    )
    return ranked[: request.top_k]


def ranked_payload(
    ranked: Sequence[RankedOutfit],
    catalog: Catalog,
    bundle: ModelBundle | None = None,
) -> list[dict]:
    """JSON-friendly view of ranked outfits; shared by the CLI and the service.

    With a bundle, each outfit also carries the style the trained classifier
    assigns to it (used by the UI's style histogram).
    """
    payload = []
    for r in ranked:
        entry: dict = {
            "score": r.score,
            "items": [
                {
                    "id": iid,
                    "high_cat": catalog[iid].category.high.value,
                    "fine_cat": catalog[iid].category.fine,
                }
                for iid in r.items
            ],
        }
        if bundle is not None:
            entry["style"] = bundle.classify_items(r.items, catalog)
        payload.append(entry)
    return payload


def style_sweep(
    bundle: ModelBundle,
    scorer: FrozenScorer,
    catalog: Catalog,
    parent_id: str,
    template: Template,
    style_a: str,
    style_b: str,
    steps: int,
    beam_width: int = 10,
) -> list[tuple[float, RankedOutfit]]:
    """Top-1 outfit at each blend point between two styles."""
    if steps < 2:
        raise GenerationError("a sweep needs at least 2 steps")
    if style_a == style_b:
        raise GenerationError("sweep styles must differ")
    out = []
    for t in np.linspace(0.0, 1.0, steps):
        request = GenerationRequest(
            parent_id=parent_id,
            template=template,
            style_weights={style_a: float(1.0 - t), style_b: float(t)},
            beam_width=beam_width,
            top_k=1,
        )
        out.append((float(t), beam_generate(request, bundle, scorer, catalog)[0]))
    return out
