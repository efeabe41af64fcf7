import type {
  ApiResult,
  FieldError,
  MappingPayload,
  MarkerEntry,
  MarkersetPayload,
  MeshPayload,
} from "./types.js";

async function errorsOf(resp: Response): Promise<FieldError[]> {
  try {
    const body = (await resp.json()) as { errors?: FieldError[] };
    if (Array.isArray(body.errors)) return body.errors;
  } catch {
    // fall through to a generic error
  }
  return [{ field: "", message: `server returned ${resp.status}` }];
}

/** Typed client for the biotwin serve endpoint. */
export class PickerApi {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async getMesh(): Promise<MeshPayload> {
    const resp = await fetch(this.url("/api/mesh"));
    if (!resp.ok) throw new Error(`GET /api/mesh failed: ${resp.status}`);
    return (await resp.json()) as MeshPayload;
  }

  async getMarkerset(): Promise<MarkersetPayload> {
    const resp = await fetch(this.url("/api/markerset"));
    if (!resp.ok) throw new Error(`GET /api/markerset failed: ${resp.status}`);
    return (await resp.json()) as MarkersetPayload;
  }

  async getMapping(): Promise<MappingPayload> {
    const resp = await fetch(this.url("/api/mapping"));
    if (!resp.ok) throw new Error(`GET /api/mapping failed: ${resp.status}`);
    return (await resp.json()) as MappingPayload;
  }

  async putMapping(payload: MappingPayload): Promise<ApiResult<MappingPayload>> {
    const resp = await fetch(this.url("/api/mapping"), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!resp.ok) return { ok: false, errors: await errorsOf(resp) };
    return { ok: true, value: (await resp.json()) as MappingPayload };
  }

  async mirror(entries: MarkerEntry[]): Promise<ApiResult<MarkerEntry[]>> {
    const resp = await fetch(this.url("/api/mirror"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ entries }),
    });
    if (!resp.ok) return { ok: false, errors: await errorsOf(resp) };
    const body = (await resp.json()) as { entries: MarkerEntry[] };
    return { ok: true, value: body.entries };
  }
}
