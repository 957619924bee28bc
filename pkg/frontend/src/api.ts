/** Thin typed client for the label service JSON API. */

import { parseGrid } from "./grid.js";
import type { PostResult } from "./queue.js";
import type {
  FeatureCollection,
  GridData,
  LabelRecord,
  ProgressDoc,
} from "./types.js";

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base = "",
    private fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.base + path;
  }

  async segments(): Promise<FeatureCollection> {
    const resp = await this.fetchFn(this.url("/api/segments"));
    if (!resp.ok) throw new Error(`segments: HTTP ${resp.status}`);
    return (await resp.json()) as FeatureCollection;
  }

  async progress(): Promise<ProgressDoc> {
    const resp = await this.fetchFn(this.url("/api/progress"));
    if (!resp.ok) throw new Error(`progress: HTTP ${resp.status}`);
    return (await resp.json()) as ProgressDoc;
  }

  /** null when the project has no CHM — the map then renders polygons only. */
  async chmGrid(): Promise<GridData | null> {
    const resp = await this.fetchFn(this.url("/api/chm.grid"));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`chm: HTTP ${resp.status}`);
    return parseGrid(await resp.text());
  }

  /** null when no basemap is available; callers fall back to the CHM. */
  async basemap(): Promise<Blob | null> {
    const resp = await this.fetchFn(this.url("/api/basemap.png"));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`basemap: HTTP ${resp.status}`);
    return await resp.blob();
  }

  /**
   * Rejects only on network failure (nothing reached the server); HTTP
   * errors resolve with ok=false and the server's reason.
   */
  async postLabel(record: LabelRecord): Promise<PostResult> {
    const resp = await this.fetchFn(this.url("/api/labels"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(record),
    });
    if (resp.ok) return { ok: true, status: resp.status };
    let error = `HTTP ${resp.status}`;
    try {
      const doc = (await resp.json()) as { error?: string };
      if (doc.error) error = doc.error;
    } catch {
      // keep the generic message when the body is not JSON
    }
    return { ok: false, status: resp.status, error };
  }

  labelsCsvUrl(): string {
    return this.url("/api/labels.csv");
  }
}
