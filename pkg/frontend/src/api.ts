// Typed client for the inference service. All numbers shown in the UI come
// verbatim from these responses; nothing is recomputed client-side.

export interface StyleInfo {
  name: string;
  index: number;
  pooled: boolean;
}

export interface ItemSummary {
  id: string;
  high_cat: string;
  fine_cat: string;
}

export interface RankedOutfit {
  score: number;
  items: ItemSummary[];
  style?: string;
}

export interface GeneratePayload {
  parent_id: string;
  template: string[];
  style_weights: Record<string, number>;
  top_k?: number;
  beam?: number;
  sample_seed?: number | null;
}

export interface GenerateResponse {
  request: unknown;
  outfits: RankedOutfit[];
}

export class ApiError extends Error {
  constructor(message: string, public status: number) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(detail, resp.status);
    }
    return resp.json() as Promise<T>;
  }

  health(): Promise<{ status: string; items: number; styles: number }> {
    return this.request("/health");
  }

  styles(): Promise<StyleInfo[]> {
    return this.request("/styles");
  }

  items(category?: string): Promise<ItemSummary[]> {
    const query = category ? `?category=${encodeURIComponent(category)}` : "";
    return this.request(`/items${query}`);
  }

  imageUrl(itemId: string): string {
    return `${this.baseUrl}/items/${encodeURIComponent(itemId)}/image`;
  }

  generate(payload: GeneratePayload): Promise<GenerateResponse> {
    return this.request("/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }
}
