import { PickerApi } from "./api.js";
import { PickSession } from "./session.js";
import { MeshViewer } from "./viewer.js";

const COLOR_BOUND = 0x3ecf6a;
const COLOR_SELECTED = 0xffb020;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

async function boot(): Promise<void> {
  const api = new PickerApi("");
  const mesh = await api.getMesh();
  const session = await PickSession.load(api);

  const list = document.getElementById("marker-list") as HTMLUListElement;
  const status = document.getElementById("status") as HTMLDivElement;
  const errors = document.getElementById("errors") as HTMLDivElement;
  const counter = document.getElementById("counter") as HTMLSpanElement;
  const canvas = document.getElementById("scene") as HTMLCanvasElement;

  const viewer = new MeshViewer(canvas, mesh, (hit) => {
    if (session.bindSelected(hit.vertexIndex)) {
      setStatus(`bound ${session.selected} to vertex ${hit.vertexIndex}`);
    } else {
      setStatus("select a marker first, then click the mesh");
    }
    refresh();
  });

  function setStatus(text: string): void {
    status.textContent = text;
  }

  function refresh(): void {
    list.replaceChildren();
    for (const name of session.order) {
      const item = el("li", session.selected === name ? "selected" : "");
      const dot = el("span", session.isBound(name) ? "dot bound" : "dot", "●");
      item.append(dot, el("span", "name", name));
      if (session.anchors.has(name)) item.append(el("span", "anchor-badge", "anchor"));
      const v = session.vertexOf(name);
      item.append(el("span", "vertex", v === null ? "—" : `#${v}`));
      item.addEventListener("click", () => {
        session.select(name);
        refresh();
      });
      list.append(item);
    }
    counter.textContent =
      `${session.boundCount()}/${session.order.length} bound` + (session.dirty ? " — unsaved" : "");
    errors.replaceChildren(
      ...session.lastErrors.map((e) => el("div", "error", `${e.field}: ${e.message}`)),
    );
    const marks = [];
    for (const name of session.order) {
      const v = session.vertexOf(name);
      if (v !== null) marks.push({ vertex: v, color: name === session.selected ? COLOR_SELECTED : COLOR_BOUND });
    }
    viewer.setHighlights(marks);
  }

  (document.getElementById("mirror") as HTMLButtonElement).addEventListener("click", async () => {
    const right = session.rightSideBound();
    if (!right.length) {
      setStatus("no bound right-side markers to mirror");
      return;
    }
    const result = await api.mirror(right);
    if (result.ok) {
      session.applyMirrored(result.value);
      setStatus(`mirrored ${result.value.length} marker(s)`);
    } else {
      session.lastErrors = result.errors;
      setStatus("mirror rejected");
    }
    refresh();
  });

  (document.getElementById("save") as HTMLButtonElement).addEventListener("click", async () => {
    const ok = await session.save(api);
    setStatus(ok ? "mapping saved" : "save rejected — fix the errors and retry");
    refresh();
  });

  (document.getElementById("reload") as HTMLButtonElement).addEventListener("click", async () => {
    await session.reload(api);
    setStatus("reloaded mapping from server");
    refresh();
  });

  setStatus(`loaded ${mesh.vertices.length} vertices, ${mesh.faces.length} faces`);
  refresh();
}

boot().catch((err) => {
  const status = document.getElementById("status");
  if (status) status.textContent = `failed to load: ${err}`;
  console.error(err);
});
