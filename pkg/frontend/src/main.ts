// App wiring: controls on the left, live results on the right, optional
// sweep strip. State lives in the URL query; sliders debounce-trigger
// requests and stale responses are dropped by sequence id.

import { ApiClient, ItemSummary, StyleInfo } from "./api.js";
import {
  BlendState,
  activeWeights,
  clampWeight,
  decodeState,
  defaultState,
  encodeState,
  hasPositiveWeight,
  sweepWeights,
} from "./state.js";
import { RequestSequencer, debounce } from "./sequence.js";
import { el, renderError, renderHistogram, renderResults, renderSweepStrip } from "./views.js";

const DEBOUNCE_MS = 250;

const api = new ApiClient("http://127.0.0.1:8732");

interface AppContext {
  styles: StyleInfo[];
  items: ItemSummary[];
  categories: string[];
  state: BlendState;
}

const generateSeq = new RequestSequencer();

function syncUrl(state: BlendState): void {
  const query = encodeState(state);
  history.replaceState(null, "", query ? `?${query}` : location.pathname);
}

function controls(ctx: AppContext, onChange: () => void): HTMLElement {
  const box = el("div", "controls");

  box.appendChild(el("h3", undefined, "anchor item"));
  const anchorSelect = el("select") as HTMLSelectElement;
  for (const item of ctx.items) {
    const opt = el("option", undefined, `${item.id} (${item.fine_cat})`) as HTMLOptionElement;
    opt.value = item.id;
    anchorSelect.appendChild(opt);
  }
  if (ctx.state.anchor) anchorSelect.value = ctx.state.anchor;
  else ctx.state.anchor = anchorSelect.value || null;
  anchorSelect.addEventListener("change", () => {
    ctx.state.anchor = anchorSelect.value;
    onChange();
  });
  box.appendChild(anchorSelect);

  box.appendChild(el("h3", undefined, "template"));
  if (!ctx.state.template.length) ctx.state.template = [...ctx.categories];
  for (const cat of ctx.categories) {
    const label = el("label", "template-slot");
    const cb = el("input") as HTMLInputElement;
    cb.type = "checkbox";
    cb.checked = ctx.state.template.includes(cat);
    cb.addEventListener("change", () => {
      ctx.state.template = ctx.categories.filter(
        (c) => (c === cat ? cb.checked : ctx.state.template.includes(c)),
      );
      onChange();
    });
    label.appendChild(cb);
    label.appendChild(el("span", undefined, cat));
    box.appendChild(label);
  }

  box.appendChild(el("h3", undefined, "style blend"));
  const validation = el("div", "validation");
  for (const style of ctx.styles) {
    const row = el("div", "slider-row");
    row.appendChild(el("span", "slider-label", style.name));
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.05";
    slider.value = String(ctx.state.weights[style.name] ?? 0);
    const value = el("span", "slider-value", Number(slider.value).toFixed(2));
    slider.addEventListener("input", () => {
      ctx.state.weights[style.name] = clampWeight(parseFloat(slider.value));
      value.textContent = Number(slider.value).toFixed(2);
      if (!hasPositiveWeight(ctx.state)) {
        validation.textContent = "at least one style weight must be positive";
      } else {
        validation.textContent = "";
        onChange();
      }
    });
    row.appendChild(slider);
    row.appendChild(value);
    box.appendChild(row);
  }
  box.appendChild(validation);

  box.appendChild(el("h3", undefined, "beam width"));
  const beam = el("input") as HTMLInputElement;
  beam.type = "number";
  beam.min = "1";
  beam.value = String(ctx.state.beam);
  beam.addEventListener("change", () => {
    ctx.state.beam = Math.max(1, parseInt(beam.value, 10) || ctx.state.beam);
    onChange();
  });
  box.appendChild(beam);

  box.appendChild(el("h3", undefined, "sweep"));
  const sweepRow = el("div", "sweep-controls");
  const selA = el("select") as HTMLSelectElement;
  const selB = el("select") as HTMLSelectElement;
  for (const sel of [selA, selB]) {
    for (const style of ctx.styles) {
      const opt = el("option", undefined, style.name) as HTMLOptionElement;
      opt.value = style.name;
      sel.appendChild(opt);
    }
  }
  selB.selectedIndex = Math.min(1, ctx.styles.length - 1);
  if (ctx.state.sweep) {
    selA.value = ctx.state.sweep.a;
    selB.value = ctx.state.sweep.b;
  }
  const sweepBtn = el("button", undefined, "show sweep");
  const clearBtn = el("button", undefined, "clear");
  sweepBtn.addEventListener("click", () => {
    if (selA.value === selB.value) {
      validation.textContent = "sweep styles must differ";
      return;
    }
    ctx.state.sweep = { a: selA.value, b: selB.value, steps: 5 };
    onChange();
  });
  clearBtn.addEventListener("click", () => {
    ctx.state.sweep = null;
    onChange();
  });
  sweepRow.appendChild(selA);
  sweepRow.appendChild(selB);
  sweepRow.appendChild(sweepBtn);
  sweepRow.appendChild(clearBtn);
  box.appendChild(sweepRow);
  return box;
}

async function refreshResults(ctx: AppContext, out: HTMLElement): Promise<void> {
  if (!ctx.state.anchor || !hasPositiveWeight(ctx.state) || ctx.state.template.length < 2) return;
  syncUrl(ctx.state);
  const seqId = generateSeq.next();
  try {
    const response = await api.generate({
      parent_id: ctx.state.anchor,
      template: ctx.state.template,
      style_weights: activeWeights(ctx.state),
      top_k: ctx.state.topK,
      beam: ctx.state.beam,
    });
    if (!generateSeq.accept(seqId)) return; // stale
    out.replaceChildren(renderResults(api, response.outfits), renderHistogram(response.outfits));
  } catch (err) {
    if (!generateSeq.accept(seqId)) return;
    out.replaceChildren(renderError(String((err as Error).message), () => void refreshResults(ctx, out)));
  }
}

async function refreshSweep(ctx: AppContext, out: HTMLElement): Promise<void> {
  const sweep = ctx.state.sweep;
  if (!sweep || !ctx.state.anchor || ctx.state.template.length < 2) {
    out.replaceChildren();
    return;
  }
  syncUrl(ctx.state);
  try {
    const columns = [];
    for (let i = 0; i < sweep.steps; i++) {
      const t = i / (sweep.steps - 1);
      const response = await api.generate({
        parent_id: ctx.state.anchor,
        template: ctx.state.template,
        style_weights: sweepWeights(sweep.a, sweep.b, t),
        top_k: 1,
        beam: ctx.state.beam,
      });
      columns.push({ t, outfit: response.outfits[0] });
    }
    out.replaceChildren(
      el("h3", undefined, `sweep ${sweep.a} -> ${sweep.b}`),
      renderSweepStrip(api, columns),
    );
  } catch (err) {
    out.replaceChildren(renderError(String((err as Error).message), () => void refreshSweep(ctx, out)));
  }
}

async function boot(): Promise<void> {
  const root = document.getElementById("app")!;
  try {
    const [styles, items] = await Promise.all([api.styles(), api.items()]);
    const categories = [...new Set(items.map((i) => i.high_cat))];
    const styleNames = styles.map((s) => s.name);
    const state = location.search
      ? decodeState(location.search.slice(1), styleNames)
      : defaultState(styleNames);
    const ctx: AppContext = { styles, items, categories, state };

    const results = el("div", "results-pane");
    const sweepPane = el("div", "sweep-pane");
    const trigger = debounce(() => {
      void refreshResults(ctx, results);
      void refreshSweep(ctx, sweepPane);
    }, DEBOUNCE_MS);

    root.replaceChildren(controls(ctx, trigger), el("div", "right-pane"));
    const right = root.querySelector(".right-pane")!;
    right.appendChild(results);
    right.appendChild(sweepPane);
    trigger();
  } catch (err) {
    root.replaceChildren(
      renderError(`cannot reach the inference service: ${(err as Error).message}`, () => void boot()),
    );
  }
}

void boot();
