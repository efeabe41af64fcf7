import type { PickerApi } from "./api.js";
import type { FieldError, MappingPayload, MarkerEntry, MarkersetPayload } from "./types.js";

/**
 * Client-side annotation state: which marker is selected, which markers are
 * bound to which vertex, and whether anything diverges from the server.
 *
 * Bindings only ever enter through bind() (a pick) or applyMirrored() (a
 * server mirror response); the session never invents vertex indices.
 */
export class PickSession {
  readonly order: string[];
  readonly anchors: Set<string>;
  readonly pairs: [string, string][];
  readonly markerSetName: string;
  readonly numVertices: number;

  private bindings: Map<string, number | null>;
  selected: string | null = null;
  dirty = false;
  lastErrors: FieldError[] = [];

  constructor(markerset: MarkersetPayload, mapping: MappingPayload, numVertices: number) {
    this.markerSetName = mapping.marker_set ?? markerset.marker_set;
    this.order = [...markerset.markers];
    this.anchors = new Set(markerset.anchors);
    this.pairs = markerset.symmetry_pairs.map((p) => [p[0], p[1]]);
    this.numVertices = numVertices;
    this.bindings = new Map(this.order.map((name) => [name, null]));
    for (const entry of mapping.markers) {
      if (this.bindings.has(entry.name) && entry.vertex !== null) {
        this.checkVertex(entry.name, entry.vertex);
        this.bindings.set(entry.name, entry.vertex);
      }
    }
  }

  static async load(api: PickerApi): Promise<PickSession> {
    const [mesh, markerset, mapping] = await Promise.all([
      api.getMesh(),
      api.getMarkerset(),
      api.getMapping(),
    ]);
    return new PickSession(markerset, mapping, mesh.vertices.length);
  }

  private checkVertex(name: string, vertex: number): void {
    if (!Number.isInteger(vertex) || vertex < 0 || vertex >= this.numVertices) {
      throw new Error(`vertex ${vertex} for marker ${name} outside [0, ${this.numVertices})`);
    }
  }

  vertexOf(name: string): number | null {
    const v = this.bindings.get(name);
    return v === undefined ? null : v;
  }

  isBound(name: string): boolean {
    return this.vertexOf(name) !== null;
  }

  boundCount(): number {
    let n = 0;
    for (const v of this.bindings.values()) if (v !== null) n++;
    return n;
  }

  select(name: string): void {
    if (!this.bindings.has(name)) throw new Error(`unknown marker ${name}`);
    this.selected = name;
  }

  bind(name: string, vertex: number): void {
    if (!this.bindings.has(name)) throw new Error(`unknown marker ${name}`);
    this.checkVertex(name, vertex);
    this.bindings.set(name, vertex);
    this.dirty = true;
  }

  /** Bind the picked vertex to the selected marker; false when none selected. */
  bindSelected(vertex: number): boolean {
    if (this.selected === null) return false;
    this.bind(this.selected, vertex);
    return true;
  }

  unbind(name: string): void {
    if (!this.bindings.has(name)) throw new Error(`unknown marker ${name}`);
    if (this.bindings.get(name) !== null) {
      this.bindings.set(name, null);
      this.dirty = true;
    }
  }

  anchorsBound(): boolean {
    for (const a of this.anchors) if (!this.isBound(a)) return false;
    return true;
  }

  /** Bound markers that sit on the right side of a symmetry pair. */
  rightSideBound(): MarkerEntry[] {
    const out: MarkerEntry[] = [];
    for (const [right] of this.pairs) {
      const v = this.vertexOf(right);
      if (v !== null) out.push({ name: right, vertex: v });
    }
    return out;
  }

  /** Apply a server mirror response, binding the returned left-side markers. */
  applyMirrored(entries: MarkerEntry[]): void {
    for (const e of entries) {
      if (e.vertex === null) continue;
      this.bind(e.name, e.vertex);
    }
  }

  toMappingPayload(): MappingPayload {
    return {
      marker_set: this.markerSetName,
      markers: this.order.map((name) => ({ name, vertex: this.vertexOf(name) })),
      symmetry_pairs: this.pairs.map((p) => [...p]),
      anchors: [...this.anchors],
    };
  }

  /**
   * Persist through PUT /api/mapping. Keeps the dirty flag (and the field
   * errors) when the server rejects the update; clears it on success.
   */
  async save(api: PickerApi, requireAnchors = true): Promise<boolean> {
    if (requireAnchors && !this.anchorsBound()) {
      this.lastErrors = [
        { field: "anchors", message: "all anchor markers must be bound before saving" },
      ];
      return false;
    }
    const result = await api.putMapping(this.toMappingPayload());
    if (!result.ok) {
      this.lastErrors = result.errors;
      return false;
    }
    this.lastErrors = [];
    this.dirty = false;
    return true;
  }

  /** Replace local bindings with the server's current mapping. */
  async reload(api: PickerApi): Promise<void> {
    const mapping = await api.getMapping();
    for (const name of this.order) this.bindings.set(name, null);
    for (const entry of mapping.markers) {
      if (this.bindings.has(entry.name) && entry.vertex !== null) {
        this.checkVertex(entry.name, entry.vertex);
        this.bindings.set(entry.name, entry.vertex);
      }
    }
    this.dirty = false;
    this.lastErrors = [];
  }
}
