/** Species colors and status tints for the segment layer. */

export interface Palette {
  species: Record<number, string>;
  unknown: string; // species_code 0 = skip/unknown
  unlabeled: string;
  proposedRing: string;
  verifiedRing: string;
  selection: string;
}

/** Default palette: one hue per species code, matched to common field maps. */
export const DEFAULT_PALETTE: Palette = {
  species: {
    1: "#2e7d32", // pine
    2: "#1b5e20", // spruce
    3: "#9ccc65", // birch
    4: "#c0ca33", // aspen
    5: "#ffb300", // alder
    6: "#8d6e63", // rowan
    7: "#26a69a", // willow
    8: "#7e57c2", // oak
    9: "#ef5350", // other broad-leaved
  },
  unknown: "#9e9e9e",
  unlabeled: "#455a64",
  proposedRing: "#ffd54f",
  verifiedRing: "#ffffff",
  selection: "#00e5ff",
};

/** Color-blind-safe variant (Okabe–Ito plus two extensions). */
export const SAFE_PALETTE: Palette = {
  species: {
    1: "#0072b2",
    2: "#009e73",
    3: "#e69f00",
    4: "#56b4e9",
    5: "#f0e442",
    6: "#d55e00",
    7: "#cc79a7",
    8: "#999933",
    9: "#882255",
  },
  unknown: "#9e9e9e",
  unlabeled: "#455a64",
  proposedRing: "#ffffff",
  verifiedRing: "#000000",
  selection: "#00e5ff",
};

export function speciesColor(palette: Palette, code: number | null): string {
  if (code === null) return palette.unlabeled;
  if (code === 0) return palette.unknown;
  return palette.species[code] ?? palette.unlabeled;
}

/** Linear dark-to-light green ramp for CHM heights. */
export function heightColor(value: number, vmax: number): string {
  const t = vmax > 0 ? Math.min(1, Math.max(0, value / vmax)) : 0;
  const r = Math.round(16 + 90 * t);
  const g = Math.round(48 + 170 * t);
  const b = Math.round(28 + 70 * t);
  return `rgb(${r},${g},${b})`;
}
