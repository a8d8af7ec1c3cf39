"""Core data model: items, outfits, styles, templates and JSONL dataset I/O.

A dataset directory holds ``items.jsonl`` (one catalog item per line) and
``outfits.jsonl`` (one outfit per line). Items carry either an explicit
feature vector or a relative image path; outfits are unordered sets of item
ids tagged with a style name and a train/valid/test split.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

# One item per high-level category caps outfit size.
MAX_OUTFIT_SIZE = 6


class DatasetError(Exception):
    """Base error for dataset parsing and validation failures."""


class DatasetParseError(DatasetError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class DatasetValidationError(DatasetError):
    pass


class HighCategory(str, Enum):
    TOPWEAR = "topwear"
    BOTTOMWEAR = "bottomwear"
    FOOTWEAR = "footwear"
    ACCESSORY = "accessory"
    CLOTHING_ACCESSORY = "clothing_accessory"
    WHOLEBODY = "wholebody"


HIGH_CATEGORIES = list(HighCategory)

# Wholebody garments replace separate top/bottom pieces; the three cannot mix.
_WHOLEBODY_CONFLICTS = {HighCategory.TOPWEAR, HighCategory.BOTTOMWEAR}


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class Category:
    high: HighCategory
    fine: str


@dataclass(frozen=True)
class StyleLabel:
    index: int
    name: str


@dataclass(frozen=True)
class Template:
    """Ordered list of high-level category slots to fill during generation."""

    slots: tuple[HighCategory, ...]

    def __post_init__(self):
        if not self.slots:
            raise DatasetValidationError("template must have at least one slot")
        if len(set(self.slots)) != len(self.slots):
            raise DatasetValidationError("template slots must be distinct high-level categories")

    @classmethod
    def parse(cls, text: str) -> "Template":
        names = [t.strip() for t in text.split(",") if t.strip()]
        try:
            return cls(tuple(HighCategory(n) for n in names))
        except ValueError as exc:
            raise DatasetValidationError(f"unknown high-level category in template {text!r}") from exc

    def __iter__(self):
        return iter(self.slots)

    def __len__(self):
        return len(self.slots)


class Item:
    """Catalog entry with exactly one feature source: a vector or an image path."""

    __slots__ = ("id", "category", "features", "image")

    def __init__(
        self,
        id: str,
        category: Category,
        features: np.ndarray | Sequence[float] | None = None,
        image: str | None = None,
    ):
        if (features is None) == (image is None):
            raise DatasetValidationError(f"item {id!r} must have exactly one of features/image")
        self.id = id
        self.category = category
        self.features = None if features is None else np.asarray(features, dtype=np.float32)
        self.image = image

    def __eq__(self, other) -> bool:
        if not isinstance(other, Item):
            return NotImplemented
        if (self.id, self.category, self.image) != (other.id, other.category, other.image):
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        src = "image" if self.image is not None else f"d={len(self.features)}"
        return f"Item({self.id!r}, {self.category.high.value}/{self.category.fine}, {src})"


@dataclass(frozen=True)
class Outfit:
    """Unordered set of item ids with a style and a split tag."""

    id: str
    items: frozenset[str]
    style: StyleLabel
    split: Split

    def sorted_items(self) -> list[str]:
        return sorted(self.items)


class Catalog:
    """Immutable item collection with category indices.

    ``base_dir`` resolves relative image paths for image-mode items.
    """

    def __init__(self, items: Iterable[Item], base_dir: Path | None = None):
        self._items: dict[str, Item] = {}
        self.base_dir = Path(base_dir) if base_dir is not None else None
        fine_to_high: dict[str, HighCategory] = {}
        feature_dim: int | None = None
        modes = set()
        for item in items:
            if item.id in self._items:
                raise DatasetValidationError(f"duplicate item id {item.id!r}")
            high = fine_to_high.setdefault(item.category.fine, item.category.high)
            if high != item.category.high:
                raise DatasetValidationError(
                    f"fine category {item.category.fine!r} mapped to both "
                    f"{high.value!r} and {item.category.high.value!r}"
                )
            if item.features is not None:
                modes.add("vector")
                if feature_dim is None:
                    feature_dim = int(item.features.shape[0])
                elif feature_dim != item.features.shape[0]:
                    raise DatasetValidationError(
                        f"item {item.id!r} has feature dim {item.features.shape[0]}, expected {feature_dim}"
                    )
            else:
                modes.add("image")
            self._items[item.id] = item
        if len(modes) > 1:
            raise DatasetValidationError("catalog mixes vector and image items")
        self.feature_dim = feature_dim
        self._by_high: dict[HighCategory, list[str]] = {}
        self._by_fine: dict[str, list[str]] = {}
        for iid in sorted(self._items):
            item = self._items[iid]
            self._by_high.setdefault(item.category.high, []).append(iid)
            self._by_fine.setdefault(item.category.fine, []).append(iid)

    def __len__(self):
        return len(self._items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def __getitem__(self, item_id: str) -> Item:
        return self._items[item_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Catalog):
            return NotImplemented
        return sorted(self._items) == sorted(other._items) and all(
            self._items[k] == other._items[k] for k in self._items
        )

    def ids(self) -> list[str]:
        return sorted(self._items)

    def items(self) -> list[Item]:
        return [self._items[i] for i in self.ids()]

    def by_high(self, high: HighCategory) -> list[str]:
        return list(self._by_high.get(high, []))

    def by_fine(self, fine: str) -> list[str]:
        return list(self._by_fine.get(fine, []))

    def fine_categories(self) -> list[str]:
        return sorted(self._by_fine)

    def high_categories(self) -> list[HighCategory]:
        return sorted(self._by_high, key=lambda h: h.value)


def build_style_labels(outfits: Iterable[Outfit | str]) -> list[StyleLabel]:
    """Style universe as labels indexed by sorted name order."""
    names = sorted({o if isinstance(o, str) else o.style.name for o in outfits})
    return [StyleLabel(i, n) for i, n in enumerate(names)]


def validate_outfit(outfit: Outfit, catalog: Catalog) -> None:
    if len(outfit.items) < 2:
        raise DatasetValidationError(f"outfit {outfit.id!r} has fewer than 2 items")
    if len(outfit.items) > MAX_OUTFIT_SIZE:
        raise DatasetValidationError(f"outfit {outfit.id!r} exceeds {MAX_OUTFIT_SIZE} items")
    highs: set[HighCategory] = set()
    for iid in outfit.sorted_items():
        if iid not in catalog:
            raise DatasetValidationError(f"outfit {outfit.id!r}: dangling reference to item {iid!r}")
        high = catalog[iid].category.high
        if high in highs:
            raise DatasetValidationError(
                f"outfit {outfit.id!r} has two items of high-level category {high.value!r}"
            )
        highs.add(high)
    if HighCategory.WHOLEBODY in highs and highs & _WHOLEBODY_CONFLICTS:
        raise DatasetValidationError(
            f"outfit {outfit.id!r} mixes wholebody with topwear/bottomwear"
        )


def validate_dataset(catalog: Catalog, outfits: Sequence[Outfit]) -> None:
    seen = set()
    for outfit in outfits:
        if outfit.id in seen:
            raise DatasetValidationError(f"duplicate outfit id {outfit.id!r}")
        seen.add(outfit.id)
        validate_outfit(outfit, catalog)


def _item_record(item: Item) -> dict:
    rec: dict = {
        "id": item.id,
        "high_cat": item.category.high.value,
        "fine_cat": item.category.fine,
    }
    if item.features is not None:
        rec["features"] = [float(x) for x in item.features]
    else:
        rec["image"] = item.image
    return rec


def _outfit_record(outfit: Outfit) -> dict:
    return {
        "id": outfit.id,
        "items": outfit.sorted_items(),
        "style": outfit.style.name,
        "split": outfit.split.value,
    }


def save_catalog(catalog: Catalog, outfits: Sequence[Outfit], path: str | Path) -> None:
    """Write ``items.jsonl`` and ``outfits.jsonl`` under ``path``.

    Records are sorted by id and keys are sorted, so output bytes are a pure
    function of the dataset content.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "items.jsonl", "w") as fh:
        for item in catalog.items():
            fh.write(json.dumps(_item_record(item), sort_keys=True) + "\n")
    with open(out / "outfits.jsonl", "w") as fh:
        for outfit in sorted(outfits, key=lambda o: o.id):
            fh.write(json.dumps(_outfit_record(outfit), sort_keys=True) + "\n")


def _parse_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(str(path), lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise DatasetParseError(str(path), lineno, "expected a JSON object")
            yield lineno, rec


def _require(rec: Mapping, key: str, path: Path, lineno: int):
    if key not in rec:
        raise DatasetParseError(str(path), lineno, f"missing field {key!r}")
    return rec[key]


def load_catalog(path: str | Path) -> tuple[Catalog, list[Outfit]]:
    """Load and validate a dataset directory written by :func:`save_catalog`."""
    root = Path(path)
    items_path = root / "items.jsonl"
    outfits_path = root / "outfits.jsonl"
    if not items_path.exists():
        raise DatasetError(f"missing {items_path}")

    items: list[Item] = []
    for lineno, rec in _parse_jsonl(items_path):
        high_raw = _require(rec, "high_cat", items_path, lineno)
        try:
            high = HighCategory(high_raw)
        except ValueError:
            raise DatasetParseError(str(items_path), lineno, f"unknown high-level category {high_raw!r}")
        category = Category(high, str(_require(rec, "fine_cat", items_path, lineno)))
        try:
            items.append(
                Item(
                    id=str(_require(rec, "id", items_path, lineno)),
                    category=category,
                    features=rec.get("features"),
                    image=rec.get("image"),
                )
            )
        except DatasetValidationError as exc:
            raise DatasetParseError(str(items_path), lineno, str(exc)) from exc
    catalog = Catalog(items, base_dir=root)

    raw_outfits: list[tuple[int, dict]] = []
    style_names: set[str] = set()
    if outfits_path.exists():
        for lineno, rec in _parse_jsonl(outfits_path):
            style_names.add(str(_require(rec, "style", outfits_path, lineno)))
            raw_outfits.append((lineno, rec))
    labels = {l.name: l for l in build_style_labels(sorted(style_names))}

    outfits: list[Outfit] = []
    for lineno, rec in raw_outfits:
        ids = _require(rec, "items", outfits_path, lineno)
        if not isinstance(ids, list):
            raise DatasetParseError(str(outfits_path), lineno, "'items' must be a list")
        if len(set(ids)) != len(ids):
            oid = rec.get("id", "?")
            raise DatasetValidationError(f"outfit {oid!r} lists a duplicate item id")
        split_raw = _require(rec, "split", outfits_path, lineno)
        try:
            split = Split(split_raw)
        except ValueError:
            raise DatasetParseError(str(outfits_path), lineno, f"unknown split {split_raw!r}")
        outfits.append(
            Outfit(
                id=str(_require(rec, "id", outfits_path, lineno)),
                items=frozenset(str(i) for i in ids),
                style=labels[str(rec["style"])],
                split=split,
            )
        )
    validate_dataset(catalog, outfits)
    return catalog, outfits


def outfits_by_split(outfits: Sequence[Outfit]) -> dict[Split, list[Outfit]]:
    groups: dict[Split, list[Outfit]] = {s: [] for s in Split}
    for o in outfits:
        groups[o.split].append(o)
    return groups
