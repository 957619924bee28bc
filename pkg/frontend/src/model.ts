/**
 * View model: segment state, selection, and the verification-pass filters.
 * Pure data and transitions — rendering and network live elsewhere, so every
 * rule here is testable without a browser.
 */

import type { FilterName, ProgressDoc, Segment } from "./types.js";

/** Disagreement above this puts a prediction in the review queue. */
export const DISAGREEMENT_THRESHOLD = 0.25;

export class AppModel {
  segments: Segment[] = [];
  selectedId: number | null = null;
  speciesNames: Record<string, string> = {};

  load(segments: Segment[], progress: ProgressDoc | null): void {
    this.segments = segments;
    this.speciesNames = progress?.species ?? {};
    if (
      this.selectedId !== null &&
      !segments.some((s) => s.id === this.selectedId)
    ) {
      this.selectedId = null;
    }
  }

  byId(id: number): Segment | undefined {
    return this.segments.find((s) => s.id === id);
  }

  select(id: number | null): void {
    this.selectedId = id !== null && this.byId(id) ? id : null;
  }

  selected(): Segment | null {
    return this.selectedId === null ? null : (this.byId(this.selectedId) ?? null);
  }

  /** Mirror a server-acknowledged label into the local state. */
  applyLabel(
    id: number,
    code: number,
    status: "proposed" | "verified" = "proposed",
  ): void {
    const s = this.byId(id);
    if (!s) return;
    s.labelCode = code;
    s.labelStatus = status;
  }

  /**
   * The verification-pass working set, in iteration order. Disagreement
   * review runs worst-first; the other passes keep map order.
   */
  filteredIds(filter: FilterName): number[] {
    switch (filter) {
      case "unlabeled":
        return this.segments.filter((s) => s.labelCode === null).map((s) => s.id);
      case "proposed":
        return this.segments
          .filter((s) => s.labelStatus === "proposed")
          .map((s) => s.id);
      case "high-disagreement":
        return this.segments
          .filter(
            (s) =>
              s.predictedCode !== null &&
              s.disagreement >= DISAGREEMENT_THRESHOLD,
          )
          .sort((a, b) => b.disagreement - a.disagreement)
          .map((s) => s.id);
    }
  }

  /** Step through the filtered set; +1 forward, -1 back. Wraps around. */
  step(filter: FilterName, direction: 1 | -1): number | null {
    const ids = this.filteredIds(filter);
    if (ids.length === 0) return null;
    const at = this.selectedId === null ? -1 : ids.indexOf(this.selectedId);
    let next: number;
    if (at === -1) {
      next = direction === 1 ? 0 : ids.length - 1;
    } else {
      next = (at + direction + ids.length) % ids.length;
    }
    this.select(ids[next]);
    return this.selectedId;
  }
}

/**
 * Keyboard mapping for species keys. Digits 1-9 label with that code only
 * when the service's species table (the single source of truth) defines it;
 * 0 always records skip/unknown.
 */
export function keyToCode(
  key: string,
  speciesNames: Record<string, string>,
): number | null {
  if (key === "0") return 0;
  if (!/^[1-9]$/.test(key)) return null;
  return key in speciesNames ? Number(key) : null;
}
