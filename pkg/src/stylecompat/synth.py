"""Synthetic catalog/outfit generator with planted, recoverable structure.

Every item feature is a sum of four planted components:

    style prototype + fine-category prototype + hue-cluster offset + noise

Outfits are sampled style-first: a style picks fine categories according to a
planted affinity table, and all items of one outfit share a hue cluster. Hue
is independent of style, so compatibility (hue agreement) and style (prototype
plus affinity footprint) are separately learnable and separately testable.
Also houses the soft/hard negative samplers and the tiny procedural renderer
used in image mode.
"""
from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .data import (
    Catalog,
    Category,
    DatasetError,
    HighCategory,
    Item,
    Outfit,
    Split,
    build_style_labels,
    save_catalog,
)

IMAGE_SIZE = 16

_STYLE_NAME_POOL = ["casual", "formal", "party", "sport", "summer", "winter", "outdoor", "retro"]
_FINE_NAME_POOL = {
    HighCategory.TOPWEAR: ["tee", "shirt", "blouse", "hoodie", "tank", "polo"],
    HighCategory.BOTTOMWEAR: ["jeans", "skirt", "shorts", "trousers", "leggings", "chinos"],
    HighCategory.FOOTWEAR: ["sneakers", "heels", "boots", "sandals", "loafers", "flats"],
    HighCategory.ACCESSORY: ["cap", "scarf", "belt", "watch", "bag", "sunglasses"],
    HighCategory.CLOTHING_ACCESSORY: ["cardigan", "blazer", "vest", "shawl", "poncho", "kimono"],
    HighCategory.WHOLEBODY: ["dress", "jumpsuit", "gown", "romper", "overalls", "kaftan"],
}


class InfeasibleConfigError(DatasetError):
    pass


class SamplingError(DatasetError):
    pass


@dataclass
class GenConfig:
    m_styles: int = 4
    n_high_categories: int = 4
    fines_per_high: int = 4
    items_per_fine: int = 16
    n_outfits: int = 2000
    d_f: int = 16
    noise_scale: float = 0.25
    seed: int = 0
    mode: Literal["vector", "image"] = "vector"
    n_hues: int = 4
    # Fraction of outfit slots filled by an item whose planted style differs
    # from the outfit style; > 0 lets anchors appear across several styles.
    cross_style_rate: float = 0.15

    def validate(self) -> None:
        counts = {
            "m_styles": self.m_styles,
            "n_high_categories": self.n_high_categories,
            "fines_per_high": self.fines_per_high,
            "items_per_fine": self.items_per_fine,
            "n_outfits": self.n_outfits,
            "d_f": self.d_f,
            "n_hues": self.n_hues,
        }
        for name, value in counts.items():
            if value < 1:
                raise InfeasibleConfigError(f"{name} must be >= 1, got {value}")
        if self.noise_scale < 0:
            raise InfeasibleConfigError("noise_scale must be >= 0")
        if not 0 <= self.cross_style_rate <= 1:
            raise InfeasibleConfigError("cross_style_rate must be in [0, 1]")
        if self.n_high_categories > len(HighCategory):
            raise InfeasibleConfigError(f"at most {len(HighCategory)} high-level categories exist")
        if self.items_per_fine < self.n_hues * self.m_styles:
            raise InfeasibleConfigError(
                "items_per_fine must be >= n_hues * m_styles so every "
                "(fine, hue, style) pool is non-empty"
            )
        if self.d_f < 8:
            raise InfeasibleConfigError(
                "d_f must be >= 8 so hue, style and fine prototypes get disjoint bands"
            )
        if self.mode not in ("vector", "image"):
            raise InfeasibleConfigError(f"unknown mode {self.mode!r}")


@dataclass
class PlantedStructure:
    """Ground truth the generator plants; evaluation oracles read it back."""

    style_names: list[str]
    high_categories: list[str]
    fine_categories: dict[str, list[str]]  # high -> fines
    style_prototypes: np.ndarray  # (m, d_f)
    fine_prototypes: dict[str, np.ndarray]
    hue_offsets: np.ndarray  # (n_hues, d_f)
    affinity: dict[str, dict[str, dict[str, float]]]  # style -> high -> fine -> weight
    item_styles: dict[str, int]
    item_hues: dict[str, int]
    config: GenConfig

    def fine_index(self, fine: str) -> int:
        ordered = [f for high in self.high_categories for f in self.fine_categories[high]]
        return ordered.index(fine)

    def to_json(self) -> dict:
        return {
            "style_names": self.style_names,
            "high_categories": self.high_categories,
            "fine_categories": self.fine_categories,
            "style_prototypes": self.style_prototypes.tolist(),
            "fine_prototypes": {k: v.tolist() for k, v in self.fine_prototypes.items()},
            "hue_offsets": self.hue_offsets.tolist(),
            "affinity": self.affinity,
            "item_styles": self.item_styles,
            "item_hues": self.item_hues,
            "config": asdict(self.config),
        }

    @classmethod
    def from_json(cls, rec: dict) -> "PlantedStructure":
        return cls(
            style_names=list(rec["style_names"]),
            high_categories=list(rec["high_categories"]),
            fine_categories={k: list(v) for k, v in rec["fine_categories"].items()},
            style_prototypes=np.asarray(rec["style_prototypes"], dtype=np.float64),
            fine_prototypes={k: np.asarray(v, dtype=np.float64) for k, v in rec["fine_prototypes"].items()},
            hue_offsets=np.asarray(rec["hue_offsets"], dtype=np.float64),
            affinity={s: {h: dict(f) for h, f in hs.items()} for s, hs in rec["affinity"].items()},
            item_styles={k: int(v) for k, v in rec["item_styles"].items()},
            item_hues={k: int(v) for k, v in rec["item_hues"].items()},
            config=GenConfig(**rec["config"]),
        )


def _style_names(m: int) -> list[str]:
    if m <= len(_STYLE_NAME_POOL):
        return _STYLE_NAME_POOL[:m]
    return _STYLE_NAME_POOL + [f"style{i}" for i in range(len(_STYLE_NAME_POOL), m)]


def _fine_names(high: HighCategory, count: int) -> list[str]:
    pool = _FINE_NAME_POOL[high]
    if count <= len(pool):
        return pool[:count]
    return pool + [f"{high.value}_fine{i}" for i in range(len(pool), count)]


def _affinity_row(style_idx: int, n_fines: int) -> np.ndarray:
    """Sparse affinity over a high-level category's fines for one style.

    Each style leans on at most three fines (rotated by style index) so that
    some fines never occur under some styles; that keeps idf > 0 for the
    discriminative-category analysis. The heavy skew makes each style's
    preferred fine strongly dominant within outfits.
    """
    base = np.array([0.8, 0.15, 0.05])[:n_fines]
    row = np.zeros(n_fines)
    for offset, w in enumerate(base):
        row[(style_idx + offset) % n_fines] += w
    return row / row.sum()


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    mat = rng.normal(size=(n, d))
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


def _prototype_bands(d_f: int) -> tuple[slice, slice, slice]:
    """Disjoint feature bands for hue, style and fine prototypes.

    Keeping the three signals in separate subspaces lets a subspace-masked
    metric isolate them; it also makes hard negatives (same fine prototype)
    strictly harder to reject than soft ones.
    """
    hue_end = max(2, d_f // 4)
    style_end = hue_end + max(2, d_f // 4)
    return slice(0, hue_end), slice(hue_end, style_end), slice(style_end, d_f)


def _fine_prototypes(
    rng: np.random.Generator,
    fine_names: Sequence[str],
    fines_per_high: int,
    band: slice,
    d_f: int,
) -> dict[str, np.ndarray]:
    """Fine prototypes on an affinity ring plus a per-fine identity component.

    Fines that co-occur under the same styles (nearby indices modulo the
    per-high count) get nearby ring angles, so affinity-consistent item
    combinations are close in feature space while equally-wrong fines are
    systematically farther.
    """
    width = band.stop - band.start
    id_dims = width - 2
    protos = {}
    for gi, name in enumerate(fine_names):
        j = gi % fines_per_high
        angle = 2.0 * np.pi * j / fines_per_high
        vec = np.zeros(d_f)
        vec[band.start] = np.cos(angle)
        vec[band.start + 1] = np.sin(angle)
        if id_dims > 0:
            ident = rng.normal(size=id_dims)
            vec[band.start + 2 : band.stop] = 0.5 * ident / np.linalg.norm(ident)
        protos[name] = vec
    return protos


def generate(config: GenConfig) -> tuple[Catalog, list[Outfit], PlantedStructure]:
    """Sample a catalog, outfit set and its planted structure from ``config.seed``."""
    config.validate()
    rng = np.random.default_rng(config.seed)

    style_names = _style_names(config.m_styles)
    labels = build_style_labels(style_names)
    label_by_name = {l.name: l for l in labels}
    highs = list(HighCategory)[: config.n_high_categories]
    fine_cats = {h.value: _fine_names(h, config.fines_per_high) for h in highs}

    hue_band, style_band, fine_band = _prototype_bands(config.d_f)
    hue_offsets = np.zeros((config.n_hues, config.d_f))
    hue_offsets[:, hue_band] = 1.25 * _unit_rows(rng, config.n_hues, hue_band.stop - hue_band.start)
    style_protos = np.zeros((config.m_styles, config.d_f))
    style_protos[:, style_band] = _unit_rows(
        rng, config.m_styles, style_band.stop - style_band.start
    )
    all_fines = [f for h in highs for f in fine_cats[h.value]]
    fine_protos = _fine_prototypes(rng, all_fines, config.fines_per_high, fine_band, config.d_f)

    affinity: dict[str, dict[str, dict[str, float]]] = {}
    for k, sname in enumerate(style_names):
        affinity[sname] = {}
        for h in highs:
            fines = fine_cats[h.value]
            row = _affinity_row(k, len(fines))
            affinity[sname][h.value] = {f: float(w) for f, w in zip(fines, row)}

    # Catalog: pools cycle through (hue, style) pairs so each (fine, hue,
    # style) combination is populated.
    items: list[Item] = []
    item_styles: dict[str, int] = {}
    item_hues: dict[str, int] = {}
    # item id -> row in pool lookup
    pools: dict[tuple[str, int, int], list[str]] = {}
    counter = 0
    for h in highs:
        for fine in fine_cats[h.value]:
            for j in range(config.items_per_fine):
                hue = j % config.n_hues
                style = (j // config.n_hues) % config.m_styles
                iid = f"i{counter:05d}"
                counter += 1
                feats = (
                    style_protos[style]
                    + fine_protos[fine]
                    + hue_offsets[hue]
                    + rng.normal(0.0, config.noise_scale, size=config.d_f)
                )
                if config.mode == "vector":
                    item = Item(iid, Category(h, fine), features=feats.astype(np.float32))
                else:
                    item = Item(iid, Category(h, fine), image=f"images/{iid}.png")
                items.append(item)
                item_styles[iid] = style
                item_hues[iid] = hue
                pools.setdefault((fine, hue, style), []).append(iid)
    catalog = Catalog(items)

    hue_pools: dict[tuple[str, int], list[str]] = {}
    for (fine, hue, _style), ids in sorted(pools.items()):
        hue_pools.setdefault((fine, hue), []).extend(ids)

    max_size = min(len(highs), 6)
    sizes = list(range(2, max_size + 1)) if max_size >= 2 else [max_size]
    # geometric tilt toward small outfits; short ground-truth outfits are the
    # recoverable targets for generation-based evaluation
    size_weights = np.array([0.6 ** (s - 2) for s in sizes])
    size_weights = size_weights / size_weights.sum()
    outfits: list[Outfit] = []
    for i in range(config.n_outfits):
        style_idx = int(rng.integers(config.m_styles))
        sname = style_names[style_idx]
        hue = int(rng.integers(config.n_hues))
        size = int(sizes[int(rng.choice(len(sizes), p=size_weights))])
        cat_idx = rng.choice(len(highs), size=size, replace=False)
        chosen: list[str] = []
        for ci in sorted(int(c) for c in cat_idx):
            h = highs[ci]
            fines = fine_cats[h.value]
            weights = np.array([affinity[sname][h.value][f] for f in fines])
            fine = fines[int(rng.choice(len(fines), p=weights))]
            if config.cross_style_rate > 0 and rng.random() < config.cross_style_rate:
                pool = hue_pools[(fine, hue)]
            else:
                pool = pools[(fine, hue, style_idx)]
            chosen.append(pool[int(rng.integers(len(pool)))])
        outfits.append(
            Outfit(
                id=f"o{i:06d}",
                items=frozenset(chosen),
                style=label_by_name[sname],
                split=Split.TRAIN,  # reassigned below
            )
        )

    n = config.n_outfits
    n_train = round(0.7 * n)
    n_test = round(0.2 * n)
    order = rng.permutation(n)
    split_of = {}
    for pos, idx in enumerate(order):
        if pos < n_train:
            split_of[idx] = Split.TRAIN
        elif pos < n_train + n_test:
            split_of[idx] = Split.TEST
        else:
            split_of[idx] = Split.VALID
    outfits = [
        Outfit(o.id, o.items, o.style, split_of[i]) for i, o in enumerate(outfits)
    ]

    planted = PlantedStructure(
        style_names=style_names,
        high_categories=[h.value for h in highs],
        fine_categories=fine_cats,
        style_prototypes=style_protos,
        fine_prototypes=fine_protos,
        hue_offsets=hue_offsets,
        affinity=affinity,
        item_styles=item_styles,
        item_hues=item_hues,
        config=config,
    )
    return catalog, outfits, planted


def sample_negatives(
    catalog: Catalog,
    outfit: Outfit,
    replaced_item: str,
    kind: Literal["soft", "hard"],
    count: int,
    seed: int | np.random.SeedSequence,
) -> list[str]:
    """Deterministically sample replacement items for ``replaced_item``.

    Soft negatives share the replaced item's high-level category, hard
    negatives its fine-grained category. The replaced item itself is never
    returned.
    """
    if replaced_item not in outfit.items:
        raise SamplingError(f"item {replaced_item!r} is not part of outfit {outfit.id!r}")
    category = catalog[replaced_item].category
    if kind == "soft":
        eligible = catalog.by_high(category.high)
    elif kind == "hard":
        eligible = catalog.by_fine(category.fine)
    else:
        raise SamplingError(f"unknown negative kind {kind!r}")
    eligible = [i for i in eligible if i != replaced_item]
    if len(eligible) < count:
        raise SamplingError(
            f"need {count} {kind} negatives for {replaced_item!r}, only {len(eligible)} eligible"
        )
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(eligible), size=count, replace=False)
    return [eligible[int(p)] for p in picks]


# Procedural 16x16 renderer. Regions are disjoint by construction:
# stripe rows encode style, the centre glyph encodes the fine category and
# the remaining background encodes the hue cluster.
_STRIPE_ROWS = (0, 1, 14, 15)
_GLYPH = slice(5, 11)


def image_render(fine_index: int, hue_index: int, style_index: int, n_hues: int) -> np.ndarray:
    """Render one item as a (16, 16, 3) uint8 array."""
    hue = 0.85 * hue_index / max(n_hues, 1)
    bg = np.array(colorsys.hsv_to_rgb(hue, 0.55, 0.82)) * 255
    img = np.tile(bg.astype(np.uint8), (IMAGE_SIZE, IMAGE_SIZE, 1))

    period = 2 + (style_index % 6)
    for row in _STRIPE_ROWS:
        cols = np.arange(IMAGE_SIZE) % period == 0
        img[row, cols] = (25, 25, 25)

    cells = np.arange(36).reshape(6, 6)
    pattern = ((fine_index + 1) * (cells + 3)) % 4 < 2
    glyph = np.where(pattern[..., None], np.uint8(245), np.uint8(40))
    img[_GLYPH, _GLYPH] = np.repeat(glyph, 3, axis=-1).reshape(6, 6, 3)
    return img


def render_item_image(planted: PlantedStructure, item_id: str, fine: str) -> np.ndarray:
    return image_render(
        fine_index=planted.fine_index(fine),
        hue_index=planted.item_hues[item_id],
        style_index=planted.item_styles[item_id],
        n_hues=planted.config.n_hues,
    )


def write_dataset(
    out_dir: str | Path,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    planted: PlantedStructure,
) -> None:
    """Persist JSONL files, the planted-structure JSON and any item images."""
    out = Path(out_dir)
    save_catalog(catalog, outfits, out)
    with open(out / "planted_structure.json", "w") as fh:
        json.dump(planted.to_json(), fh, sort_keys=True)
        fh.write("\n")
    if planted.config.mode == "image":
        from PIL import Image

        (out / "images").mkdir(exist_ok=True)
        for item in catalog.items():
            arr = render_item_image(planted, item.id, item.category.fine)
            Image.fromarray(arr).save(out / item.image)
    catalog.base_dir = out


def load_planted(path: str | Path) -> PlantedStructure:
    with open(Path(path) / "planted_structure.json") as fh:
        return PlantedStructure.from_json(json.load(fh))
