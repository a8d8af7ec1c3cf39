"""HTTP inference service: catalog browsing and style-conditioned generation.

All state is loaded once at startup and never mutated; every endpoint is
side-effect-free and deterministic unless a request opts into sampling via
``sample_seed``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .checkpoint import load_checkpoint
from .data import Catalog, DatasetValidationError, HighCategory, Template, load_catalog
from .generation import GenerationError, GenerationRequest, beam_generate, ranked_payload
from .model import ModelBundle
from .scoring import FrozenScorer


@dataclass
class ServiceState:
    bundle: ModelBundle
    catalog: Catalog
    scorer: FrozenScorer
    swatches: dict[str, tuple[int, int, int]]


def _swatch_colors(catalog: Catalog) -> dict[str, tuple[int, int, int]]:
    """Vector mode: a stable color per item from its leading feature dims."""
    feats = np.stack([catalog[i].features for i in catalog.ids()])
    take = min(3, feats.shape[1])
    cols = feats[:, :take].astype(np.float64)
    lo, hi = cols.min(axis=0), cols.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    norm = (cols - lo) / span
    rgb = np.zeros((len(feats), 3))
    rgb[:, :take] = norm
    out = {}
    for iid, row in zip(catalog.ids(), (rgb * 255).astype(np.uint8)):
        out[iid] = (int(row[0]), int(row[1]), int(row[2]))
    return out


def load_service_state(checkpoint_path, data_dir, kernel: str | None = None) -> ServiceState:
    bundle = load_checkpoint(checkpoint_path)
    catalog, _ = load_catalog(data_dir)
    scorer = FrozenScorer.from_bundle(bundle, catalog, backend=kernel)
    swatches = _swatch_colors(catalog) if catalog.feature_dim is not None else {}
    return ServiceState(bundle, catalog, scorer, swatches)


class GeneratePayload(BaseModel):
    parent_id: str
    template: list[str]
    style_weights: dict[str, float]
    top_k: int = Field(default=5, ge=1)
    beam: int = Field(default=10, ge=1)
    sample_seed: int | None = None


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="stylecompat inference service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    bundle, catalog = state.bundle, state.catalog

    @app.get("/health")
    def health():
        return {"status": "ok", "items": len(catalog), "styles": len(bundle.style_labels)}

    @app.get("/styles")
    def styles():
        pooled = bundle.pooled.means if bundle.pooled else {}
        return [
            {"name": l.name, "index": l.index, "pooled": l.name in pooled}
            for l in bundle.style_labels
        ]

    @app.get("/items")
    def items(category: str | None = Query(default=None)):
        ids = catalog.ids()
        if category is not None:
            try:
                ids = catalog.by_high(HighCategory(category))
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown category {category!r}")
        return [
            {
                "id": i,
                "high_cat": catalog[i].category.high.value,
                "fine_cat": catalog[i].category.fine,
            }
            for i in ids
        ]

    @app.get("/items/{item_id}/image")
    def item_image(item_id: str):
        if item_id not in catalog:
            raise HTTPException(status_code=404, detail="unknown item")
        from PIL import Image

        item = catalog[item_id]
        if item.image is not None:
            if catalog.base_dir is None:
                raise HTTPException(status_code=500, detail="catalog has no base directory")
            path = catalog.base_dir / item.image
            if not path.exists():
                raise HTTPException(status_code=404, detail="image file missing")
            return Response(content=path.read_bytes(), media_type="image/png")
        color = state.swatches.get(item_id, (127, 127, 127))
        img = Image.new("RGB", (16, 16), color)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/generate")
    def generate(payload: GeneratePayload):
        if payload.parent_id not in catalog:
            raise HTTPException(status_code=404, detail="unknown item")
        try:
            template = Template.parse(",".join(payload.template))
            request = GenerationRequest(
                parent_id=payload.parent_id,
                template=template,
                style_weights=payload.style_weights,
                beam_width=payload.beam,
                top_k=payload.top_k,
                sample_seed=payload.sample_seed,
            )
            ranked = beam_generate(request, bundle, state.scorer, catalog)
        except (GenerationError, DatasetValidationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"request": payload.model_dump(), "outfits": ranked_payload(ranked, catalog, bundle)}

    return app
