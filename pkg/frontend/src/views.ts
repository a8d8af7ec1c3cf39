// DOM construction for result grids, the style histogram and the sweep
// strip. Pure functions of API responses; no scores are recomputed here.

import type { ApiClient, RankedOutfit } from "./api.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderOutfitRow(api: ApiClient, outfit: RankedOutfit): HTMLElement {
  const row = el("div", "outfit-row");
  const score = el("div", "outfit-score", outfit.score.toFixed(4));
  if (outfit.style) {
    score.appendChild(el("div", "outfit-style", outfit.style));
  }
  row.appendChild(score);
  const items = el("div", "outfit-items");
  for (const item of outfit.items) {
    const card = el("div", "item-card");
    const img = el("img") as HTMLImageElement;
    img.src = api.imageUrl(item.id);
    img.alt = item.id;
    img.width = 48;
    img.height = 48;
    card.appendChild(img);
    card.appendChild(el("div", "item-id", item.id));
    card.appendChild(el("div", "item-cat", `${item.high_cat} / ${item.fine_cat}`));
    items.appendChild(card);
  }
  row.appendChild(items);
  return row;
}

export function renderResults(api: ApiClient, outfits: RankedOutfit[]): HTMLElement {
  const box = el("div", "results");
  if (!outfits.length) {
    box.appendChild(el("p", "empty", "no outfits returned"));
    return box;
  }
  for (const outfit of outfits) box.appendChild(renderOutfitRow(api, outfit));
  return box;
}

export function styleHistogram(outfits: RankedOutfit[]): Map<string, number> {
  const counts = new Map<string, number>();
  for (const o of outfits) {
    const key = o.style ?? "?";
    counts.set(key, (counts.get(key) ?? 0) + 1);
  }
  return counts;
}

export function renderHistogram(outfits: RankedOutfit[]): HTMLElement {
  const box = el("div", "histogram");
  box.appendChild(el("h3", undefined, "styles of returned outfits"));
  const counts = styleHistogram(outfits);
  const max = Math.max(1, ...counts.values());
  for (const [name, count] of [...counts.entries()].sort()) {
    const row = el("div", "hist-row");
    row.appendChild(el("span", "hist-label", `${name} (${count})`));
    const bar = el("div", "hist-bar");
    bar.style.width = `${(100 * count) / max}%`;
    row.appendChild(bar);
    box.appendChild(row);
  }
  return box;
}

export function renderSweepStrip(
  api: ApiClient,
  columns: { t: number; outfit: RankedOutfit }[],
): HTMLElement {
  const strip = el("div", "sweep-strip");
  for (const { t, outfit } of columns) {
    const col = el("div", "sweep-col");
    col.appendChild(el("div", "sweep-t", `t = ${t.toFixed(2)}`));
    col.appendChild(renderOutfitRow(api, outfit));
    strip.appendChild(col);
  }
  return strip;
}

export function renderError(message: string, onRetry: () => void): HTMLElement {
  const banner = el("div", "error-banner");
  banner.appendChild(el("span", undefined, `request failed: ${message}`));
  const retry = el("button", "retry", "retry");
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  return banner;
}
