import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylecompat.data import (
    Catalog,
    Category,
    DatasetParseError,
    DatasetValidationError,
    HighCategory,
    Item,
    Outfit,
    Split,
    StyleLabel,
    Template,
    build_style_labels,
    load_catalog,
    save_catalog,
    validate_outfit,
)
from stylecompat.synth import GenConfig, generate


def _item(iid, high=HighCategory.TOPWEAR, fine="tee", feats=(1.0, 2.0)):
    return Item(iid, Category(high, fine), features=np.array(feats, dtype=np.float32))


def _mini_catalog():
    items = [
        _item("a", HighCategory.TOPWEAR, "tee"),
        _item("b", HighCategory.BOTTOMWEAR, "jeans"),
        _item("c", HighCategory.FOOTWEAR, "boots"),
    ]
    return Catalog(items)


STYLE = StyleLabel(0, "casual")


def test_load_small_file_round_trip(tmp_path):
    catalog = _mini_catalog()
    outfits = [Outfit("o1", frozenset({"a", "b", "c"}), STYLE, Split.TRAIN)]
    save_catalog(catalog, outfits, tmp_path)
    cat2, outs2 = load_catalog(tmp_path)
    assert len(cat2) == 3
    assert len(outs2) == 1
    assert outs2[0].items == {"a", "b", "c"}


def test_dangling_reference_rejected(tmp_path):
    save_catalog(_mini_catalog(), [], tmp_path)
    with open(tmp_path / "outfits.jsonl", "w") as fh:
        fh.write(json.dumps({"id": "o1", "items": ["a", "zz"], "style": "casual", "split": "train"}) + "\n")
    with pytest.raises(DatasetValidationError, match="dangling reference"):
        load_catalog(tmp_path)


def test_duplicate_item_in_outfit_rejected(tmp_path):
    save_catalog(_mini_catalog(), [], tmp_path)
    with open(tmp_path / "outfits.jsonl", "w") as fh:
        fh.write(json.dumps({"id": "o1", "items": ["a", "a"], "style": "casual", "split": "train"}) + "\n")
    with pytest.raises(DatasetValidationError, match="duplicate item"):
        load_catalog(tmp_path)


def test_parse_error_carries_line_number(tmp_path):
    save_catalog(_mini_catalog(), [], tmp_path)
    with open(tmp_path / "outfits.jsonl", "w") as fh:
        fh.write(json.dumps({"id": "o1", "items": ["a", "b"], "style": "casual", "split": "train"}) + "\n")
        fh.write("{ not json\n")
    with pytest.raises(DatasetParseError, match="outfits.jsonl:2"):
        load_catalog(tmp_path)


def test_empty_outfit_list_loads_back_empty(tmp_path):
    save_catalog(_mini_catalog(), [], tmp_path)
    cat2, outs2 = load_catalog(tmp_path)
    assert len(cat2) == 3
    assert outs2 == []


def test_same_high_category_twice_rejected():
    items = [_item("a", fine="tee"), _item("b", fine="shirt")]
    catalog = Catalog(items)
    outfit = Outfit("o1", frozenset({"a", "b"}), STYLE, Split.TRAIN)
    with pytest.raises(DatasetValidationError, match="two items of high-level category"):
        validate_outfit(outfit, catalog)


def test_wholebody_conflicts_with_topwear():
    items = [
        _item("a", HighCategory.TOPWEAR, "tee"),
        _item("w", HighCategory.WHOLEBODY, "dress"),
    ]
    outfit = Outfit("o1", frozenset({"a", "w"}), STYLE, Split.TRAIN)
    with pytest.raises(DatasetValidationError, match="wholebody"):
        validate_outfit(outfit, Catalog(items))


def test_singleton_outfit_rejected():
    outfit = Outfit("o1", frozenset({"a"}), STYLE, Split.TRAIN)
    with pytest.raises(DatasetValidationError, match="fewer than 2"):
        validate_outfit(outfit, _mini_catalog())


def test_fine_category_maps_to_one_high():
    items = [
        _item("a", HighCategory.TOPWEAR, "tee"),
        _item("b", HighCategory.BOTTOMWEAR, "tee"),
    ]
    with pytest.raises(DatasetValidationError, match="mapped to both"):
        Catalog(items)


def test_item_needs_exactly_one_feature_source():
    with pytest.raises(DatasetValidationError):
        Item("a", Category(HighCategory.TOPWEAR, "tee"))
    with pytest.raises(DatasetValidationError):
        Item("a", Category(HighCategory.TOPWEAR, "tee"), features=[1.0], image="x.png")


def test_feature_dim_constant_across_catalog():
    items = [_item("a", feats=(1.0, 2.0)), _item("b", HighCategory.BOTTOMWEAR, "jeans", feats=(1.0,))]
    with pytest.raises(DatasetValidationError, match="feature dim"):
        Catalog(items)


def test_outfit_set_semantics():
    o1 = Outfit("o", frozenset({"a", "b"}), STYLE, Split.TRAIN)
    o2 = Outfit("o", frozenset({"b", "a"}), STYLE, Split.TRAIN)
    assert o1 == o2


def test_byte_stable_save(tmp_path):
    config = GenConfig(n_outfits=100, seed=3)
    catalog, outfits, _ = generate(config)
    d1, d2 = tmp_path / "one", tmp_path / "two"
    save_catalog(catalog, outfits, d1)
    save_catalog(catalog, list(reversed(outfits)), d2)  # order must not matter
    for name in ("items.jsonl", "outfits.jsonl"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_generator_round_trip_field_by_field(tmp_path):
    config = GenConfig(n_outfits=150, seed=5)
    catalog, outfits, _ = generate(config)
    save_catalog(catalog, outfits, tmp_path)
    cat2, outs2 = load_catalog(tmp_path)
    assert cat2 == catalog
    by_id = {o.id: o for o in outs2}
    assert len(outs2) == len(outfits)
    for o in outfits:
        o2 = by_id[o.id]
        assert o2.items == o.items
        assert o2.style == o.style
        assert o2.split == o.split


def test_template_parse_and_validation():
    t = Template.parse("topwear, bottomwear,footwear")
    assert len(t) == 3
    with pytest.raises(DatasetValidationError):
        Template.parse("topwear,topwear")
    with pytest.raises(DatasetValidationError):
        Template.parse("sombrero")
    with pytest.raises(DatasetValidationError):
        Template(())


def test_style_labels_sorted_and_indexed():
    labels = build_style_labels(["party", "casual", "party"])
    assert [l.name for l in labels] == ["casual", "party"]
    assert [l.index for l in labels] == [0, 1]


_HIGHS = list(HighCategory)[:4]
_FINES = {h: f"{h.value}_f" for h in _HIGHS}


@st.composite
def _datasets(draw):
    n_items = draw(st.integers(min_value=4, max_value=12))
    items = []
    for i in range(n_items):
        high = _HIGHS[i % len(_HIGHS)]
        feats = draw(
            st.lists(
                st.floats(min_value=-10, max_value=10, allow_nan=False, width=32),
                min_size=3,
                max_size=3,
            )
        )
        items.append(Item(f"i{i}", Category(high, _FINES[high]), features=feats))
    catalog = Catalog(items)
    n_outfits = draw(st.integers(min_value=0, max_value=5))
    outfits = []
    for j in range(n_outfits):
        size = draw(st.integers(min_value=2, max_value=len(_HIGHS)))
        cats = draw(st.permutations(_HIGHS))[:size]
        chosen = []
        for c in cats:
            pool = catalog.by_high(c)
            chosen.append(pool[draw(st.integers(min_value=0, max_value=len(pool) - 1))])
        style = draw(st.sampled_from(["casual", "formal"]))
        split = draw(st.sampled_from(list(Split)))
        outfits.append(Outfit(f"o{j}", frozenset(chosen), StyleLabel(0, style), split))
    return catalog, outfits


@settings(max_examples=25, deadline=None)
@given(_datasets())
def test_round_trip_identity_property(tmp_path_factory, dataset):
    catalog, outfits = dataset
    path = tmp_path_factory.mktemp("rt")
    save_catalog(catalog, outfits, path)
    cat2, outs2 = load_catalog(path)
    assert cat2 == catalog
    assert {o.id: (o.items, o.style.name, o.split) for o in outs2} == {
        o.id: (o.items, o.style.name, o.split) for o in outfits
    }
