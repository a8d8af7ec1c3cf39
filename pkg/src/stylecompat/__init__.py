"""Style-conditioned outfit compatibility: training, generation, evaluation."""

__version__ = "0.1.0"

from .data import (
    Catalog,
    Category,
    HighCategory,
    Item,
    Outfit,
    Split,
    StyleLabel,
    Template,
    load_catalog,
    save_catalog,
)
from .synth import GenConfig, generate, image_render, sample_negatives

__all__ = [
    "Catalog",
    "Category",
    "GenConfig",
    "HighCategory",
    "Item",
    "Outfit",
    "Split",
    "StyleLabel",
    "Template",
    "generate",
    "image_render",
    "load_catalog",
    "sample_negatives",
    "save_catalog",
    "__version__",
]
