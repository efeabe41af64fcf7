export interface MeshPayload {
  vertices: number[][];
  faces: number[][];
}

export interface MarkersetPayload {
  marker_set: string;
  markers: string[];
  anchors: string[];
  symmetry_pairs: string[][];
}

export interface MarkerEntry {
  name: string;
  vertex: number | null;
}

export interface MappingPayload {
  marker_set: string;
  markers: MarkerEntry[];
  symmetry_pairs: string[][];
  anchors: string[];
  symmetry_table?: string | number[];
}

export interface FieldError {
  field: string;
  message: string;
}

export type ApiResult<T> = { ok: true; value: T } | { ok: false; errors: FieldError[] };
