/** Shared domain types mirrored from the label service JSON API. */

export interface SegmentProperties {
  segment_id: number;
  height?: number;
  predicted_code?: number;
  disagreement?: number;
  label_code?: number;
  label_status?: string;
  [key: string]: unknown;
}

export interface Feature {
  type: "Feature";
  properties: SegmentProperties;
  geometry: {
    type: "Polygon";
    coordinates: number[][][];
  };
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: Feature[];
}

export interface LabelRecord {
  segment_id: number;
  species_code: number; // 1..9, or 0 = unknown / skip
  status?: "proposed" | "verified";
  annotator?: string;
  note?: string;
}

export interface ProgressDoc {
  n_segments: number;
  n_labeled: number;
  by_species: Record<string, number>;
  by_status: Record<string, number>;
  species: Record<string, string>; // code -> name, the key mapping source
}

/** One segment as the UI tracks it: geometry plus live label state. */
export interface Segment {
  id: number;
  ring: Array<[number, number]>; // outer ring, world coordinates
  bbox: [number, number, number, number]; // minx, miny, maxx, maxy
  predictedCode: number | null;
  disagreement: number; // 0 when the model is certain or absent
  labelCode: number | null;
  labelStatus: "proposed" | "verified" | null;
}

export type FilterName = "unlabeled" | "proposed" | "high-disagreement";

export interface GridData {
  ncols: number;
  nrows: number;
  xllcorner: number;
  yllcorner: number;
  cellsize: number;
  nodata: number;
  values: Float32Array; // row-major, row 0 = northernmost
}
