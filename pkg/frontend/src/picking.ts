/**
 * Pure ray-cast vertex picking: nearest ray/triangle hit, then the nearest
 * corner of the hit triangle. Going through the surface first (rather than
 * screen-space nearest vertex) keeps occluded back-surface vertices from
 * being picked at low zoom.
 */

export type Vec3 = readonly [number, number, number];

export interface PickHit {
  faceIndex: number;
  vertexIndex: number;
  point: Vec3;
  distance: number;
}

const EPS = 1e-12;

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function dist2(a: Vec3, b: Vec3): number {
  const d = sub(a, b);
  return dot(d, d);
}

/**
 * Moeller-Trumbore ray/triangle intersection. Returns the ray parameter t
 * (>= 0) of the hit, or null. Both triangle orientations hit: the picker
 * must not care about winding.
 */
export function rayTriangle(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3): number | null {
  const e1 = sub(b, a);
  const e2 = sub(c, a);
  const p = cross(dir, e2);
  const det = dot(e1, p);
  if (Math.abs(det) < EPS) return null; // parallel or degenerate
  const inv = 1.0 / det;
  const s = sub(origin, a);
  const u = dot(s, p) * inv;
  if (u < -EPS || u > 1 + EPS) return null;
  const q = cross(s, e1);
  const v = dot(dir, q) * inv;
  if (v < -EPS || u + v > 1 + EPS) return null;
  const t = dot(e2, q) * inv;
  return t >= EPS ? t : null;
}

function vertexAt(vertices: ArrayLike<number>, index: number): Vec3 {
  return [vertices[3 * index], vertices[3 * index + 1], vertices[3 * index + 2]];
}

/**
 * Cast a ray into the mesh and return the nearest corner of the nearest
 * hit triangle. `vertices` is a flat xyz array, `faces` flat index triples.
 * Returns null when the ray misses everything.
 */
export function pickVertex(
  origin: Vec3,
  dir: Vec3,
  vertices: ArrayLike<number>,
  faces: ArrayLike<number>,
): PickHit | null {
  let bestT = Infinity;
  let bestFace = -1;
  const numFaces = Math.floor(faces.length / 3);
  for (let f = 0; f < numFaces; f++) {
    const t = rayTriangle(
      origin,
      dir,
      vertexAt(vertices, faces[3 * f]),
      vertexAt(vertices, faces[3 * f + 1]),
      vertexAt(vertices, faces[3 * f + 2]),
    );
    if (t !== null && t < bestT) {
      bestT = t;
      bestFace = f;
    }
  }
  if (bestFace < 0) return null;
  const point: Vec3 = [
    origin[0] + dir[0] * bestT,
    origin[1] + dir[1] * bestT,
    origin[2] + dir[2] * bestT,
  ];
  let bestVertex = -1;
  let bestD2 = Infinity;
  for (let k = 0; k < 3; k++) {
    const idx = faces[3 * bestFace + k];
    const d2 = dist2(point, vertexAt(vertices, idx));
    if (d2 < bestD2 || (d2 === bestD2 && idx < bestVertex)) {
      bestD2 = d2;
      bestVertex = idx;
    }
  }
  return { faceIndex: bestFace, vertexIndex: bestVertex, point, distance: bestT };
}

/** Linear-scan nearest vertex to a point; ties break to the lowest index. */
export function nearestVertex(point: Vec3, vertices: ArrayLike<number>): number {
  const count = Math.floor(vertices.length / 3);
  let best = -1;
  let bestD2 = Infinity;
  for (let i = 0; i < count; i++) {
    const d2 = dist2(point, vertexAt(vertices, i));
    if (d2 < bestD2) {
      bestD2 = d2;
      best = i;
    }
  }
  return best;
}

/** Flatten [[x,y,z],...] rows into a Float64Array for the pickers above. */
export function flatten(rows: number[][]): Float64Array {
  const out = new Float64Array(rows.length * 3);
  for (let i = 0; i < rows.length; i++) {
    out[3 * i] = rows[i][0];
    out[3 * i + 1] = rows[i][1];
    out[3 * i + 2] = rows[i][2];
  }
  return out;
}
