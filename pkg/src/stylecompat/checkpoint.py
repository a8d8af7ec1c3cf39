"""Checkpoint archive: manifest.json + raw little-endian float32 tensor blobs.

A single zip holds every module's named tensors, the configs needed to
rebuild them, pooled style stats and the torch RNG state. Stage-1-only
checkpoints simply lack the compatibility sections; stage 2 loads them and
adds its own.
"""
from __future__ import annotations

import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .compat_net import CompatConfig, SubspaceEmbedder
from .data import StyleLabel
from .encoders import EncoderConfig, build_encoder
from .model import ModelBundle
from .style_encoder import (
    PooledStyleStats,
    StyleClassifier,
    StyleEncoderConfig,
    StyleEncoderNet,
    StyleRepBuilder,
    StyleRepConfig,
)

FORMAT_VERSION = "1"

_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(Exception):
    pass


def _module_sections(bundle: ModelBundle) -> dict[str, torch.nn.Module]:
    sections = {
        "senet_encoder": bundle.senet_encoder,
        "senet": bundle.senet,
        "classifier": bundle.classifier,
    }
    if bundle.has_compat:
        sections["compat_encoder"] = bundle.compat_encoder
        sections["embedder"] = bundle.embedder
        sections["rep_builder"] = bundle.rep_builder
    return sections


def save_checkpoint(bundle: ModelBundle, path: str | Path) -> None:
    manifest: dict = {
        "format_version": FORMAT_VERSION,
        "has_compat": bundle.has_compat,
        "styles": [l.name for l in bundle.style_labels],
        "configs": {
            "senet_encoder": asdict(bundle.senet_encoder_config),
            "compat_encoder": asdict(bundle.compat_encoder_config),
            "senet": asdict(bundle.senet_config),
            "compat": asdict(bundle.compat_config),
            "rep": bundle.rep_config.to_json(),
        },
        "sections": {},
    }
    blobs: dict[str, bytes] = {}
    for section, module in _module_sections(bundle).items():
        entry = {}
        for name, tensor in module.state_dict().items():
            arr = tensor.detach().cpu().numpy()
            dtype = str(arr.dtype)
            if dtype not in _DTYPES:
                raise CheckpointError(f"unsupported dtype {dtype} for {section}/{name}")
            entry[name] = {"shape": list(arr.shape), "dtype": dtype}
            blobs[f"tensors/{section}/{name}.bin"] = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        manifest["sections"][section] = entry

    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)

    def entry(name: str) -> zipfile.ZipInfo:
        # fixed timestamp keeps archive bytes a pure function of the contents
        info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
        info.compress_type = zipfile.ZIP_DEFLATED
        return info

    with zipfile.ZipFile(out, "w") as zf:
        zf.writestr(entry("manifest.json"), json.dumps(manifest, sort_keys=True, indent=1))
        if bundle.pooled is not None:
            zf.writestr(entry("pooled.json"), json.dumps(bundle.pooled.to_json(), sort_keys=True))
        zf.writestr(entry("rng.bin"), torch.get_rng_state().numpy().tobytes())
        for name, blob in sorted(blobs.items()):
            zf.writestr(entry(name), blob)


def _load_section(zf: zipfile.ZipFile, manifest: dict, section: str, module: torch.nn.Module) -> None:
    entries = manifest["sections"][section]
    state = {}
    for name, meta in entries.items():
        raw = zf.read(f"tensors/{section}/{name}.bin")
        arr = np.frombuffer(raw, dtype=_DTYPES[meta["dtype"]]).reshape(meta["shape"]).copy()
        state[name] = torch.from_numpy(arr)
    module.load_state_dict(state)


def load_checkpoint(path: str | Path, restore_rng: bool = False) -> ModelBundle:
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"no checkpoint at {p}")
    try:
        zf = zipfile.ZipFile(p)
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"corrupt checkpoint {p}: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise CheckpointError(f"corrupt checkpoint {p}: missing manifest")
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version!r} not supported (expected {FORMAT_VERSION!r})"
            )
        cfgs = manifest["configs"]
        senet_enc_cfg = EncoderConfig(**cfgs["senet_encoder"])
        compat_enc_cfg = EncoderConfig(**cfgs["compat_encoder"])
        senet_cfg = StyleEncoderConfig(**cfgs["senet"])
        compat_cfg = CompatConfig(**cfgs["compat"])
        rep_cfg = StyleRepConfig.from_json(cfgs["rep"])
        labels = [StyleLabel(i, n) for i, n in enumerate(manifest["styles"])]
        cls_in = senet_cfg.d_s if rep_cfg.classifier_input == "sample" else 2 * senet_cfg.d_s
        rep_builder = StyleRepBuilder(rep_cfg, senet_cfg.d_s)
        bundle = ModelBundle(
            senet_encoder=build_encoder(senet_enc_cfg),
            senet=StyleEncoderNet(senet_cfg),
            classifier=StyleClassifier(cls_in, senet_cfg.classifier_hidden, len(labels)),
            compat_encoder=build_encoder(compat_enc_cfg),
            embedder=SubspaceEmbedder(compat_cfg, rep_builder.rep_dim()),
            rep_builder=rep_builder,
            style_labels=labels,
            senet_encoder_config=senet_enc_cfg,
            compat_encoder_config=compat_enc_cfg,
            senet_config=senet_cfg,
            compat_config=compat_cfg,
            rep_config=rep_cfg,
            has_compat=bool(manifest["has_compat"]),
        )
        for section, module in _module_sections(bundle).items():
            _load_section(zf, manifest, section, module)
        names = set(zf.namelist())
        if "pooled.json" in names:
            bundle.pooled = PooledStyleStats.from_json(json.loads(zf.read("pooled.json")))
        if restore_rng and "rng.bin" in names:
            state = np.frombuffer(zf.read("rng.bin"), dtype=np.uint8).copy()
            torch.set_rng_state(torch.from_numpy(state))
    return bundle.eval_mode()
