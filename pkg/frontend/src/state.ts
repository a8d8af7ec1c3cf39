// View state and its URL-query serialization. Encoding is canonical (sorted
// keys, trimmed values) so a shared URL reproduces the identical view.

export interface BlendState {
  anchor: string | null;
  template: string[];
  weights: Record<string, number>;
  beam: number;
  topK: number;
  sweep: { a: string; b: string; steps: number } | null;
}

export const DEFAULT_BEAM = 10;
export const DEFAULT_TOP_K = 5;

export function defaultState(styleNames: string[]): BlendState {
  const weights: Record<string, number> = {};
  for (const name of styleNames) weights[name] = 0;
  if (styleNames.length > 0) weights[styleNames[0]] = 1;
  return {
    anchor: null,
    template: [],
    weights,
    beam: DEFAULT_BEAM,
    topK: DEFAULT_TOP_K,
    sweep: null,
  };
}

export function clampWeight(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

export function hasPositiveWeight(state: BlendState): boolean {
  return Object.values(state.weights).some((w) => w > 0);
}

export function activeWeights(state: BlendState): Record<string, number> {
  const out: Record<string, number> = {};
  for (const name of Object.keys(state.weights).sort()) {
    if (state.weights[name] > 0) out[name] = state.weights[name];
  }
  return out;
}

export function sweepWeights(a: string, b: string, t: number): Record<string, number> {
  return { [a]: 1 - t, [b]: t };
}

export function encodeState(state: BlendState): string {
  const params = new URLSearchParams();
  if (state.anchor) params.set("anchor", state.anchor);
  if (state.template.length) params.set("template", state.template.join(","));
  const weightParts = Object.keys(state.weights)
    .sort()
    .filter((name) => state.weights[name] > 0)
    .map((name) => `${name}:${state.weights[name]}`);
  if (weightParts.length) params.set("w", weightParts.join(","));
  if (state.beam !== DEFAULT_BEAM) params.set("beam", String(state.beam));
  if (state.topK !== DEFAULT_TOP_K) params.set("top", String(state.topK));
  if (state.sweep) params.set("sweep", `${state.sweep.a}~${state.sweep.b}~${state.sweep.steps}`);
  return params.toString();
}

export function decodeState(query: string, styleNames: string[]): BlendState {
  const params = new URLSearchParams(query);
  const state = defaultState(styleNames);
  const anchor = params.get("anchor");
  if (anchor) state.anchor = anchor;
  const template = params.get("template");
  if (template) state.template = template.split(",").filter((t) => t.length > 0);
  const weights = params.get("w");
  if (weights !== null) {
    for (const name of Object.keys(state.weights)) state.weights[name] = 0;
    for (const part of weights.split(",")) {
      const [name, raw] = part.split(":");
      if (name in state.weights) state.weights[name] = clampWeight(parseFloat(raw));
    }
  }
  const beam = params.get("beam");
  if (beam) state.beam = Math.max(1, parseInt(beam, 10) || DEFAULT_BEAM);
  const top = params.get("top");
  if (top) state.topK = Math.max(1, parseInt(top, 10) || DEFAULT_TOP_K);
  const sweep = params.get("sweep");
  if (sweep) {
    const [a, b, steps] = sweep.split("~");
    if (a && b && a !== b) state.sweep = { a, b, steps: Math.max(2, parseInt(steps, 10) || 5) };
  }
  return state;
}
