"""Evaluation metrics: FITB, compatibility AU-ROC, style entropy, correct-style
ranking, parent-child selection accuracy and the discriminative fine-grained
category rate.

Every metric is deterministic given (model, data, seed); replicated metrics
re-draw only their negative samples per replication and report mean +/- sd.
"""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.metrics import roc_auc_score

from .data import Catalog, HighCategory, Outfit, Template
from .generation import GenerationRequest, beam_generate
from .model import ModelBundle
from .scoring import FrozenScorer
from .synth import sample_negatives


@dataclass
class MetricValue:
    mean: float
    std: float
    replications: int

    def to_json(self) -> dict:
        return {"mean": self.mean, "std": self.std, "replications": self.replications}


def _replicated(values: Sequence[float]) -> MetricValue:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return MetricValue(float(arr.mean()), std, len(arr))


def shannon_entropy(counts: Sequence[int]) -> float:
    """Entropy (nats) of a histogram; 0 for empty or single-class histograms."""
    total = sum(counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log(p)
    return h


def random_rank_mrr(m: int) -> float:
    """Expected MRR when the true class lands uniformly on any of m ranks."""
    return sum(1.0 / i for i in range(1, m + 1)) / m


RepProvider = Callable[[Outfit], np.ndarray]
DistanceFn = Callable[[Sequence[str], Sequence[str], np.ndarray], np.ndarray]


def fitb(
    scorer: FrozenScorer,
    rep_provider: RepProvider,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    kind: str = "soft",
    n_candidates: int = 4,
    replications: int = 5,
    seed: int = 0,
    dist_fn: DistanceFn | None = None,
) -> MetricValue:
    """Fill-in-the-blank accuracy: pick the held-out item among candidates.

    ``dist_fn`` defaults to the scorer's candidate/query distance matrix;
    tests inject oracle or random scorers through it.
    """
    if not outfits:
        raise ValueError("no outfits to evaluate")
    if dist_fn is None:
        dist_fn = lambda cands, queries, rep: scorer.dist_matrix(cands, queries, rep).mean(axis=1)
    reps = [rep_provider(o) for o in outfits]
    accs = []
    for rep_i in range(replications):
        correct = total = 0
        for oi, outfit in enumerate(outfits):
            items = outfit.sorted_items()
            r = reps[oi]
            for pos, true_id in enumerate(items):
                queries = items[:pos] + items[pos + 1 :]
                negs = sample_negatives(
                    catalog, outfit, true_id, kind, n_candidates - 1,
                    seed=np.random.SeedSequence([seed, rep_i, oi, pos]),
                )
                d = dist_fn([true_id] + negs, queries, r)
                correct += int(np.argmin(d) == 0)
                total += 1
        accs.append(correct / total)
    return _replicated(accs)


def compat_auroc(
    scorer: FrozenScorer,
    rep_provider: RepProvider,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    kind: str = "soft",
    replications: int = 5,
    seed: int = 0,
    score_fn: Callable[[Sequence[str], np.ndarray], float] | None = None,
) -> MetricValue:
    """AU-ROC of true outfits vs single-item-corrupted negatives."""
    if not outfits:
        raise ValueError("no outfits to evaluate")
    if score_fn is None:
        score_fn = scorer.outfit_score
    reps = [rep_provider(o) for o in outfits]
    aucs = []
    for rep_i in range(replications):
        labels, scores = [], []
        for oi, outfit in enumerate(outfits):
            items = outfit.sorted_items()
            r = reps[oi]
            rng = np.random.default_rng(np.random.SeedSequence([seed, rep_i, oi]))
            pos = int(rng.integers(len(items)))
            neg = sample_negatives(
                catalog, outfit, items[pos], kind, 1,
                seed=np.random.SeedSequence([seed, rep_i, oi, 1]),
            )[0]
            corrupted = items[:pos] + [neg] + items[pos + 1 :]
            labels += [1, 0]
            scores += [score_fn(items, r), score_fn(corrupted, r)]
        aucs.append(float(roc_auc_score(labels, scores)))
    return _replicated(aucs)


def style_rank_metrics(
    scorer: FrozenScorer,
    bundle: ModelBundle,
    outfits: Sequence[Outfit],
    catalog: Catalog | None = None,
    score_fn: Callable[[Sequence[str], np.ndarray], float] | None = None,
) -> dict:
    """Rank of the true style when scoring each outfit under every style.

    The outfit itself is the reference for its true style; counterfactual
    styles have no reference outfit and fall back to pooled representations,
    mirroring both training and the generation path.
    """
    if score_fn is None:
        score_fn = scorer.outfit_score
    styles = bundle.style_names
    style_reps = {name: bundle.rep_for_style(name) for name in styles}
    ranks = []
    for outfit in outfits:
        items = outfit.sorted_items()
        own_rep = bundle.rep_for_outfit(outfit, catalog) if catalog is not None else None
        scored = []
        for idx, name in enumerate(styles):
            rep = own_rep if (own_rep is not None and idx == outfit.style.index) else style_reps[name]
            scored.append((-score_fn(items, rep), idx))
        order = [idx for _, idx in sorted(scored)]
        ranks.append(order.index(outfit.style.index) + 1)
    ranks_arr = np.asarray(ranks, dtype=np.float64)
    return {
        "mrr": float((1.0 / ranks_arr).mean()),
        "pct_rank1": float((ranks_arr == 1).mean() * 100.0),
        "pct_top3": float((ranks_arr <= 3).mean() * 100.0),
        "mean_rank": float(ranks_arr.mean()),
        "n": len(ranks),
    }


def anchors_across_styles(
    outfits: Sequence[Outfit], min_styles: int = 2, n_anchors: int | None = None, seed: int = 0
) -> list[str]:
    """Items that appear in ground-truth outfits of at least ``min_styles`` styles."""
    styles_of: dict[str, set[str]] = defaultdict(set)
    for o in outfits:
        for iid in o.items:
            styles_of[iid].add(o.style.name)
    anchors = sorted(i for i, s in styles_of.items() if len(s) >= min_styles)
    if n_anchors is not None and len(anchors) > n_anchors:
        rng = np.random.default_rng(seed)
        anchors = [anchors[int(i)] for i in sorted(rng.choice(len(anchors), n_anchors, replace=False))]
    return anchors


def parent_child_accuracy(
    scorer: FrozenScorer,
    bundle: ModelBundle,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    kind: str = "soft",
    n_candidates: int = 4,
    seed: int = 0,
    dist_fn: DistanceFn | None = None,
) -> dict:
    """Top-1 accuracy of selecting the true child item, per category pair.

    Parents are anchors that occur across styles; the candidate children are
    scored against the parent under the outfit's style (pooled representation,
    mirroring the no-reference-outfit generation setting).
    """
    if dist_fn is None:
        dist_fn = lambda cands, queries, rep: scorer.dist_matrix(cands, queries, rep)[:, 0]
    anchors = set(anchors_across_styles(outfits))
    hits: dict[tuple[str, str], list[int]] = defaultdict(list)
    style_reps = {name: bundle.rep_for_style(name) for name in bundle.style_names}
    for oi, outfit in enumerate(outfits):
        items = outfit.sorted_items()
        r = style_reps[outfit.style.name]
        for pi, parent in enumerate(items):
            if parent not in anchors:
                continue
            p_high = catalog[parent].category.high.value
            for ci, child in enumerate(items):
                if child == parent:
                    continue
                negs = sample_negatives(
                    catalog, outfit, child, kind, n_candidates - 1,
                    seed=np.random.SeedSequence([seed, oi, pi, ci]),
                )
                d = dist_fn([child] + negs, [parent], r)
                c_high = catalog[child].category.high.value
                hits[(p_high, c_high)].append(int(np.argmin(d) == 0))
    table = {
        f"{p}->{c}": {"accuracy": float(np.mean(v)), "n": len(v)}
        for (p, c), v in sorted(hits.items())
    }
    all_hits = [h for v in hits.values() for h in v]
    return {
        "pairs": table,
        "overall": float(np.mean(all_hits)) if all_hits else float("nan"),
        "n": len(all_hits),
    }


# ---------------------------------------------------------------- entropy


def _gt_by_anchor(
    outfits: Sequence[Outfit], catalog: Catalog
) -> dict[str, dict[str, list[tuple[tuple[HighCategory, ...], frozenset[str]]]]]:
    """anchor -> style -> [(template slots, ground-truth item set)]."""
    out: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for o in outfits:
        slots = tuple(sorted({catalog[i].category.high for i in o.items}, key=lambda h: h.value))
        for iid in o.items:
            out[iid][o.style.name].append((slots, frozenset(o.items)))
    return out


def style_entropy_conditioned(
    bundle: ModelBundle,
    scorer: FrozenScorer,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    anchors: Sequence[str],
    beam_width: int = 10,
) -> dict:
    """Mean entropy of the styles whose conditioned top-1 generation matches a
    ground-truth outfit of the anchor in that style."""
    gt = _gt_by_anchor(outfits, catalog)
    entropies = []
    kept_counts = []
    for anchor in anchors:
        kept = []
        for style, entries in sorted(gt[anchor].items()):
            by_template: dict[tuple, list[frozenset]] = defaultdict(list)
            for slots, items in entries:
                by_template[slots].append(items)
            matched = False
            for slots, gt_sets in sorted(by_template.items()):
                request = GenerationRequest(
                    parent_id=anchor,
                    template=Template(slots),
                    style_weights={style: 1.0},
                    beam_width=beam_width,
                    top_k=1,
                )
                top = beam_generate(request, bundle, scorer, catalog)[0]
                if top.item_set() in gt_sets:
                    matched = True
                    break
            if matched:
                kept.append(style)
        kept_counts.append(len(kept))
        entropies.append(shannon_entropy(list(Counter(kept).values())))
    return {
        "entropy": float(np.mean(entropies)) if entropies else 0.0,
        "mean_kept_styles": float(np.mean(kept_counts)) if kept_counts else 0.0,
        "n_anchors": len(list(anchors)),
    }


def style_entropy_unconditioned(
    bundle: ModelBundle,
    scorer: FrozenScorer,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    anchors: Sequence[str],
    n: int | None = None,
    beam_width: int = 10,
) -> dict:
    """Entropy of classifier-assigned styles over the top-n outfits ranked by
    the style-independent score (zero style representation)."""
    gt = _gt_by_anchor(outfits, catalog)
    n = n or len(bundle.style_labels)
    zero_rep = np.zeros(2 * bundle.d_s, dtype=np.float64)
    entropies = []
    for anchor in anchors:
        template_counts: Counter = Counter()
        for entries in gt[anchor].values():
            for slots, _ in entries:
                template_counts[slots] += 1
        slots = sorted(template_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        request = GenerationRequest(
            parent_id=anchor,
            template=Template(slots),
            style_weights={bundle.style_names[0]: 1.0},  # placeholder; rep overridden below
            beam_width=max(beam_width, n),
            top_k=n,
        )
        # rank by the unconditioned score: bypass style blending with a zero rep
        ranked = _beam_with_rep(request, scorer, catalog, zero_rep)
        styles = [bundle.classify_items(r.items, catalog) for r in ranked]
        entropies.append(shannon_entropy(list(Counter(styles).values())))
    return {"entropy": float(np.mean(entropies)) if entropies else 0.0, "n_anchors": len(list(anchors))}


def _beam_with_rep(request: GenerationRequest, scorer: FrozenScorer, catalog: Catalog, rep: np.ndarray):
    """Beam search with an explicit representation vector."""

    class _FixedRepBundle:
        d_s = rep.shape[0] // 2

        @staticmethod
        def rep_for_style(name, rng=None):
            return rep

    return beam_generate(request, _FixedRepBundle(), scorer, catalog)


# ------------------------------------------------- discriminative categories


def discriminative_sets(
    catalog: Catalog,
    outfits: Sequence[Outfit],
    styles: Sequence[str],
    top_d: int = 2,
) -> dict[str, set[str]]:
    """Per style: the tf-idf-discriminative fine categories, top_d per high.

    tf(f|s) is the share of style-s outfit items with fine category f;
    idf(f) = ln(m / #styles where f occurs). Zero-score categories never
    qualify.
    """
    m = len(styles)
    item_counts: dict[str, Counter] = {s: Counter() for s in styles}
    for o in outfits:
        for iid in o.items:
            item_counts[o.style.name][catalog[iid].category.fine] += 1
    df: Counter = Counter()
    for s in styles:
        for fine in item_counts[s]:
            df[fine] += 1
    out: dict[str, set[str]] = {}
    for s in styles:
        total = sum(item_counts[s].values())
        if total == 0:
            raise ValueError(f"style {s!r} absent from the outfit corpus")
        scored: dict[HighCategory, list[tuple[float, str]]] = defaultdict(list)
        for fine, cnt in item_counts[s].items():
            tf = cnt / total
            idf = math.log(m / df[fine])
            high = catalog[catalog.by_fine(fine)[0]].category.high
            scored[high].append((tf * idf, fine))
        chosen: set[str] = set()
        for high, rows in scored.items():
            rows.sort(key=lambda r: (-r[0], r[1]))
            chosen.update(fine for score, fine in rows[:top_d] if score > 0)
        out[s] = chosen
    return out


def discriminative_category_rate(
    generated: Mapping[str, Sequence[Sequence[str]]],
    catalog: Catalog,
    disc_sets: Mapping[str, set[str]],
) -> dict:
    """Share of generated non-anchor items inside the generating style's
    discriminative set. ``generated`` maps style -> list of item-id lists,
    each list with the anchor first."""
    per_style = {}
    tot_hit = tot_n = 0
    for style, outfit_lists in sorted(generated.items()):
        hit = n = 0
        for items in outfit_lists:
            for iid in items[1:]:  # skip the anchor
                n += 1
                hit += int(catalog[iid].category.fine in disc_sets[style])
        per_style[style] = float(hit / n) if n else float("nan")
        tot_hit += hit
        tot_n += n
    return {
        "per_style": per_style,
        "overall": float(tot_hit / tot_n) if tot_n else float("nan"),
        "n_items": tot_n,
    }


def generate_for_styles(
    bundle: ModelBundle,
    scorer: FrozenScorer,
    catalog: Catalog,
    anchors: Sequence[str],
    template: Template | None = None,
    beam_width: int = 10,
) -> dict[str, list[tuple[str, ...]]]:
    """Top-1 generation for every (anchor, style); feeds the category-rate metric."""
    if template is None:
        template = Template(tuple(catalog.high_categories()))
    out: dict[str, list[tuple[str, ...]]] = {s: [] for s in bundle.style_names}
    for anchor in anchors:
        for style in bundle.style_names:
            request = GenerationRequest(
                parent_id=anchor,
                template=template,
                style_weights={style: 1.0},
                beam_width=beam_width,
                top_k=1,
            )
            out[style].append(beam_generate(request, bundle, scorer, catalog)[0].items)
    return out


# ---------------------------------------------------------------- reporting


def evaluate_model(
    bundle: ModelBundle,
    scorer: FrozenScorer,
    catalog: Catalog,
    outfits: Sequence[Outfit],
    kinds: Sequence[str] = ("soft", "hard"),
    replications: int = 5,
    seed: int = 0,
    n_anchors: int = 40,
    beam_width: int = 10,
) -> dict:
    """Run the full metric suite on the test split; returns the report dict."""
    from .data import Split

    test = [o for o in outfits if o.split == Split.TEST]
    if not test:
        raise ValueError("no test outfits")
    rep_provider = lambda o: bundle.rep_for_outfit(o, catalog)
    report: dict = {
        "config": {
            "kinds": list(kinds),
            "replications": replications,
            "seed": seed,
            "n_test_outfits": len(test),
            "rep_preset": bundle.rep_config.name,
            "kernel_backend": scorer.backend,
        }
    }
    report["fitb"] = {
        kind: fitb(scorer, rep_provider, catalog, test, kind, replications=replications, seed=seed).to_json()
        for kind in kinds
    }
    report["compat_auroc"] = {
        kind: compat_auroc(scorer, rep_provider, catalog, test, kind, replications=replications, seed=seed).to_json()
        for kind in kinds
    }
    report["style_rank"] = style_rank_metrics(scorer, bundle, test, catalog)
    report["style_rank"]["random_baseline_mrr"] = random_rank_mrr(len(bundle.style_labels))

    # anchors come from the test split; the ground-truth match list spans all
    # annotated outfits of the anchor
    anchors = anchors_across_styles(test, n_anchors=n_anchors, seed=seed)
    report["style_entropy"] = style_entropy_conditioned(bundle, scorer, catalog, outfits, anchors, beam_width)
    report["style_entropy"]["max"] = math.log(len(bundle.style_labels))
    report["parent_child"] = parent_child_accuracy(scorer, bundle, catalog, test, seed=seed)

    disc = discriminative_sets(catalog, [o for o in outfits if o.split == Split.TRAIN], bundle.style_names)
    generated = generate_for_styles(bundle, scorer, catalog, anchors, beam_width=beam_width)
    report["discriminative_rate"] = discriminative_category_rate(generated, catalog, disc)
    report["discriminative_rate"]["sets"] = {s: sorted(v) for s, v in disc.items()}
    return report


def write_report(report: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_report(report: dict) -> str:
    """Human-readable metric table."""
    lines = []
    add = lines.append
    add(f"test outfits: {report['config']['n_test_outfits']}  "
        f"rep preset: {report['config']['rep_preset']}  "
        f"replications: {report['config']['replications']}")
    add("")
    add(f"{'metric':<34}{'value':>12}")
    add("-" * 46)
    for kind, v in report["fitb"].items():
        add(f"{'FITB (' + kind + ' negatives)':<34}{v['mean']:>8.4f} +/- {v['std']:.4f}")
    for kind, v in report["compat_auroc"].items():
        add(f"{'Compat AU-ROC (' + kind + ')':<34}{v['mean']:>8.4f} +/- {v['std']:.4f}")
    sr = report["style_rank"]
    add(f"{'Correct-style MRR':<34}{sr['mrr']:>12.4f}")
    add(f"{'  random baseline':<34}{sr['random_baseline_mrr']:>12.4f}")
    add(f"{'Correct style at rank 1 (%)':<34}{sr['pct_rank1']:>12.2f}")
    add(f"{'Correct style in top 3 (%)':<34}{sr['pct_top3']:>12.2f}")
    add(f"{'Mean rank of correct style':<34}{sr['mean_rank']:>12.2f}")
    se = report["style_entropy"]
    add(f"{'Style entropy (conditioned)':<34}{se['entropy']:>12.4f}")
    add(f"{'  max possible':<34}{se['max']:>12.4f}")
    pc = report["parent_child"]
    add(f"{'Parent-child accuracy (overall)':<34}{pc['overall']:>12.4f}")
    for pair, v in pc["pairs"].items():
        add(f"  {pair:<32}{v['accuracy']:>12.4f}")
    dr = report["discriminative_rate"]
    add(f"{'Discriminative category rate':<34}{dr['overall']:>12.4f}")
    for style, v in dr["per_style"].items():
        add(f"  {style:<32}{v:>12.4f}")
    return "\n".join(lines)
