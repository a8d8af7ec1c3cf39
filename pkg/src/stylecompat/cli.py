"""Command-line entry points.

Subcommands: gen-data, train-senet, train-scanet, eval, generate, sweep,
serve. Every subcommand accepts --seed and --config (JSON or TOML file whose
sections override the built-in defaults; explicit flags win over both).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

from .data import DatasetError, Template, build_style_labels, load_catalog
from .synth import GenConfig, generate, write_dataset


class CliError(Exception):
    pass


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}")
    if p.suffix == ".toml":
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        with open(p, "rb") as fh:
            return toml.load(fh)
    with open(p) as fh:
        return json.load(fh)


def _apply_section(obj, section: dict, known=None):
    names = {f.name for f in dc_fields(obj)} if known is None else known
    for key, value in section.items():
        if key not in names:
            raise CliError(f"unknown config key {key!r} for {type(obj).__name__}")
        setattr(obj, key, value)
    return obj


def _parse_style_weights(text: str) -> dict[str, float]:
    weights: dict[str, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            name, raw = part.split("=", 1)
            try:
                weights[name.strip()] = float(raw)
            except ValueError:
                raise CliError(f"bad style weight {part!r}")
        else:
            weights[part] = 1.0
    if not weights:
        raise CliError("no style weights given")
    return weights


def _load_model(args):
    from .checkpoint import load_checkpoint
    from .scoring import FrozenScorer

    bundle = load_checkpoint(args.checkpoint)
    catalog, outfits = load_catalog(args.data)
    scorer = FrozenScorer.from_bundle(bundle, catalog, backend=getattr(args, "kernel", None))
    return bundle, catalog, outfits, scorer


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    cfg_file = _load_config_file(args.config)
    config = GenConfig()
    _apply_section(config, cfg_file.get("gen", {}))
    if args.styles is not None:
        config.m_styles = args.styles
    if args.outfits is not None:
        config.n_outfits = args.outfits
    if args.mode is not None:
        config.mode = args.mode
    if args.feature_dim is not None:
        config.d_f = args.feature_dim
    if args.items_per_fine is not None:
        config.items_per_fine = args.items_per_fine
    if args.fines_per_high is not None:
        config.fines_per_high = args.fines_per_high
    if args.high_cats is not None:
        config.n_high_categories = args.high_cats
    if args.noise is not None:
        config.noise_scale = args.noise
    config.seed = args.seed
    catalog, outfits, planted = generate(config)
    write_dataset(args.out, catalog, outfits, planted)
    print(
        f"wrote {len(catalog)} items, {len(outfits)} outfits "
        f"({config.m_styles} styles, mode={config.mode}) to {args.out}"
    )
    return 0


def _train_config(args, cfg_file: dict):
    from .training import TrainConfig

    config = TrainConfig()
    section = cfg_file.get("train", {})
    _apply_section(config.stage1, section.get("stage1", {}))
    _apply_section(config.stage2, section.get("stage2", {}))
    for key in ("seed", "grad_clip", "patience"):
        if key in section:
            setattr(config, key, section[key])
    config.seed = args.seed
    return config


def cmd_train_senet(args) -> int:
    from .checkpoint import save_checkpoint
    from .model import build_bundle
    from .training import compute_pooled, train_stage1, write_metrics_csv

    cfg_file = _load_config_file(args.config)
    config = _train_config(args, cfg_file)
    if args.epochs is not None:
        config.stage1.epochs = args.epochs
    if args.lr is not None:
        config.stage1.lr = args.lr
    if args.batch is not None:
        config.stage1.batch_size = args.batch
    if args.alpha_kl is not None:
        config.stage1.alpha_kl = args.alpha_kl

    catalog, outfits = load_catalog(args.data)
    labels = build_style_labels(outfits)
    model_section = cfg_file.get("model", {})
    bundle = build_bundle(
        catalog,
        labels,
        rep_preset=args.style_rep,
        d_s=model_section.get("d_s", args.d_s),
        d_z=model_section.get("d_z", 32),
        seed=args.seed,
    )
    log = train_stage1(bundle, catalog, outfits, config)
    compute_pooled(bundle, catalog, outfits)
    save_checkpoint(bundle, args.out)
    if args.log:
        write_metrics_csv(log, args.log)
    best = max(l["valid_acc"] for l in log)
    print(f"stage 1 done: {len(log)} epochs, best valid accuracy {best:.4f} -> {args.out}")
    return 0


def cmd_train_scanet(args) -> int:
    from .checkpoint import load_checkpoint, save_checkpoint
    from .training import train_stage2, write_metrics_csv

    cfg_file = _load_config_file(args.config)
    config = _train_config(args, cfg_file)
    if args.epochs is not None:
        config.stage2.epochs = args.epochs
    if args.lr is not None:
        config.stage2.lr = args.lr
    if args.batch is not None:
        config.stage2.batch_size = args.batch
    if args.n_neg is not None:
        config.stage2.n_neg = args.n_neg

    bundle = load_checkpoint(args.checkpoint)
    catalog, outfits = load_catalog(args.data)
    log = train_stage2(bundle, catalog, outfits, config)
    save_checkpoint(bundle, args.out)
    if args.log:
        write_metrics_csv(log, args.log)
    print(f"stage 2 done: {len(log)} epochs, final train loss {log[-1]['train_loss']:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_model, format_report, write_report

    bundle, catalog, outfits, scorer = _load_model(args)
    kinds = ("soft", "hard") if args.negatives == "both" else (args.negatives,)
    report = evaluate_model(
        bundle,
        scorer,
        catalog,
        outfits,
        kinds=kinds,
        replications=args.replications,
        seed=args.seed,
        n_anchors=args.anchors,
    )
    print(format_report(report))
    if args.out:
        write_report(report, args.out)
        print(f"\nreport written to {args.out}")
    if args.plots:
        _eval_plots(report, args.plots)
        print(f"plots written to {args.plots}")
    return 0


def _eval_plots(report: dict, out_dir: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dr = report["discriminative_rate"]["per_style"]
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(list(dr.keys()), list(dr.values()), color="#4878cf")
    ax.axhline(report["discriminative_rate"]["overall"], color="k", ls="--", lw=1, label="overall")
    ax.set_ylabel("discriminative category rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "discriminative_rate.svg")
    plt.close(fig)

    se = report["style_entropy"]
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(["conditioned"], [se["entropy"]], color="#4878cf")
    ax.axhline(se["max"], color="k", ls="--", lw=1, label="max (ln m)")
    ax.set_ylabel("style entropy (nats)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "style_entropy.svg")
    plt.close(fig)


def cmd_generate(args) -> int:
    from .generation import GenerationRequest, beam_generate, ranked_payload

    bundle, catalog, _, scorer = _load_model(args)
    request = GenerationRequest(
        parent_id=args.parent,
        template=Template.parse(args.template),
        style_weights=_parse_style_weights(args.style),
        beam_width=args.beam,
        top_k=args.top,
        sample_seed=args.sample_seed,
    )
    ranked = beam_generate(request, bundle, scorer, catalog)
    print(json.dumps({"outfits": ranked_payload(ranked, catalog, bundle)}, indent=2))
    return 0


def cmd_sweep(args) -> int:
    from .data import Split
    from .generation import ranked_payload, style_sweep
    from .metrics import discriminative_sets

    bundle, catalog, outfits, scorer = _load_model(args)
    results = style_sweep(
        bundle,
        scorer,
        catalog,
        parent_id=args.parent,
        template=Template.parse(args.template),
        style_a=args.style_a,
        style_b=args.style_b,
        steps=args.steps,
        beam_width=args.beam,
    )
    payload = [
        {"t": t, "outfit": ranked_payload([r], catalog, bundle)[0]} for t, r in results
    ]
    print(json.dumps({"sweep": payload}, indent=2))
    if args.svg:
        train = [o for o in outfits if o.split == Split.TRAIN]
        disc = discriminative_sets(catalog, train, bundle.style_names)
        frac_b = []
        for _, r in results:
            others = r.items[1:]
            inb = [catalog[i].category.fine in disc[args.style_b] for i in others]
            frac_b.append(sum(inb) / len(inb) if inb else 0.0)
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        ts = [t for t, _ in results]
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(ts, frac_b, marker="o", color="#4878cf")
        ax.set_xlabel(f"blend weight of {args.style_b!r}")
        ax.set_ylabel(f"share of {args.style_b!r}-discriminative items")
        ax.set_ylim(-0.05, 1.05)
        fig.tight_layout()
        fig.savefig(args.svg)
        plt.close(fig)
        print(f"sweep curve written to {args.svg}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app, load_service_state

    state = load_service_state(args.checkpoint, args.data, kernel=getattr(args, "kernel", None))
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stylecompat")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=str, default=None, help="JSON or TOML config file")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--styles", type=int, default=None)
    p.add_argument("--outfits", type=int, default=None)
    p.add_argument("--mode", choices=["vector", "image"], default=None)
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--items-per-fine", type=int, default=None)
    p.add_argument("--fines-per-high", type=int, default=None)
    p.add_argument("--high-cats", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-senet", help="stage 1: style encoder + classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--style-rep", default="params")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--alpha-kl", type=float, default=None)
    p.add_argument("--d-s", type=int, default=64)
    p.add_argument("--log", default=None, help="metrics CSV path")
    common(p)
    p.set_defaults(func=cmd_train_senet)

    p = sub.add_parser("train-scanet", help="stage 2: compatibility network")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--n-neg", type=int, default=None)
    p.add_argument("--log", default=None)
    common(p)
    p.set_defaults(func=cmd_train_scanet)

    p = sub.add_parser("eval", help="run the metric suite on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--negatives", choices=["soft", "hard", "both"], default="both")
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--anchors", type=int, default=40)
    p.add_argument("--out", default=None, help="report JSON path")
    p.add_argument("--plots", default=None, help="directory for SVG plots")
    p.add_argument("--kernel", choices=["fast", "numpy"], default=None)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="beam-generate outfits for a parent item")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--parent", required=True)
    p.add_argument("--template", required=True, help="comma-separated high categories")
    p.add_argument("--style", required=True, help="e.g. 'party=0.7,formal=0.3' or 'party'")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--sample-seed", type=int, default=None)
    p.add_argument("--kernel", choices=["fast", "numpy"], default=None)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", help="interpolate between two styles")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--parent", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--style-a", required=True)
    p.add_argument("--style-b", required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--svg", default=None)
    p.add_argument("--kernel", choices=["fast", "numpy"], default=None)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8732)
    p.add_argument("--kernel", choices=["fast", "numpy"], default=None)
    common(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surface anything else with a clean message
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
