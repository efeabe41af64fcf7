import * as THREE from "three";

import { flatten, pickVertex, type PickHit } from "./picking.js";
import type { MeshPayload } from "./types.js";

/**
 * three.js scene around the served reference frame: shaded mesh, vertex
 * dots, colored spheres on bound/selected vertices, drag-orbit + wheel
 * zoom, and ray-cast picking through the shared picking math.
 */
export class MeshViewer {
  readonly onPick: (hit: PickHit) => void;

  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private vertices: Float64Array;
  private faces: Int32Array;
  private center = new THREE.Vector3();
  private spheres = new Map<number, THREE.Mesh>();
  private sphereRadius: number;

  private azimuth = 0.6;
  private elevation = 0.25;
  private radius: number;
  private dragging = false;
  private moved = 0;

  constructor(canvas: HTMLCanvasElement, mesh: MeshPayload, onPick: (hit: PickHit) => void) {
    this.onPick = onPick;
    this.vertices = flatten(mesh.vertices);
    this.faces = new Int32Array(mesh.faces.flat());

    const box = new THREE.Box3();
    for (const v of mesh.vertices) box.expandByPoint(new THREE.Vector3(v[0], v[1], v[2]));
    box.getCenter(this.center);
    const size = box.getSize(new THREE.Vector3()).length() || 1;
    this.radius = size * 1.4;
    this.sphereRadius = size * 0.012;

    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(45, 1, size / 1000, size * 20);
    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(1, 2, 2);
    this.scene.add(key);

    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.Float32BufferAttribute(mesh.vertices.flat(), 3));
    if (mesh.faces.length) {
      geometry.setIndex(Array.from(this.faces));
      geometry.computeVertexNormals();
      const surface = new THREE.Mesh(
        geometry,
        new THREE.MeshStandardMaterial({ color: 0x4f7fa8, flatShading: true, side: THREE.DoubleSide }),
      );
      this.scene.add(surface);
    }
    const dots = new THREE.Points(
      geometry.clone(),
      new THREE.PointsMaterial({ color: 0xaab6c2, size: size * 0.008 }),
    );
    this.scene.add(dots);

    canvas.addEventListener("pointerdown", (e) => {
      this.dragging = true;
      this.moved = 0;
      canvas.setPointerCapture(e.pointerId);
    });
    canvas.addEventListener("pointermove", (e) => {
      if (!this.dragging) return;
      this.moved += Math.abs(e.movementX) + Math.abs(e.movementY);
      this.azimuth -= e.movementX * 0.008;
      this.elevation = Math.min(1.5, Math.max(-1.5, this.elevation + e.movementY * 0.008));
      this.render();
    });
    canvas.addEventListener("pointerup", (e) => {
      this.dragging = false;
      if (this.moved < 4) this.pick(e);
    });
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.radius *= e.deltaY > 0 ? 1.1 : 0.9;
      this.render();
    });
    window.addEventListener("resize", () => this.resize());
    this.resize();
  }

  private pick(event: PointerEvent): void {
    const rect = (event.target as HTMLElement).getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const caster = new THREE.Raycaster();
    caster.setFromCamera(ndc, this.camera);
    const hit = pickVertex(
      caster.ray.origin.toArray() as [number, number, number],
      caster.ray.direction.toArray() as [number, number, number],
      this.vertices,
      this.faces,
    );
    if (hit) this.onPick(hit);
    // A miss is a no-op; the status bar reflects the unchanged selection.
  }

  /** Show colored spheres on the given vertices (binding/selection marks). */
  setHighlights(marks: { vertex: number; color: number }[]): void {
    for (const sphere of this.spheres.values()) this.scene.remove(sphere);
    this.spheres.clear();
    for (const mark of marks) {
      const sphere = new THREE.Mesh(
        new THREE.SphereGeometry(this.sphereRadius, 12, 12),
        new THREE.MeshBasicMaterial({ color: mark.color }),
      );
      sphere.position.set(
        this.vertices[3 * mark.vertex],
        this.vertices[3 * mark.vertex + 1],
        this.vertices[3 * mark.vertex + 2],
      );
      this.scene.add(sphere);
      this.spheres.set(mark.vertex, sphere);
    }
    this.render();
  }

  private resize(): void {
    const canvas = this.renderer.domElement;
    const w = canvas.clientWidth || canvas.parentElement?.clientWidth || 800;
    const h = canvas.clientHeight || canvas.parentElement?.clientHeight || 600;
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
    this.render();
  }

  render(): void {
    const ce = Math.cos(this.elevation);
    this.camera.position.set(
      this.center.x + this.radius * ce * Math.sin(this.azimuth),
      this.center.y + this.radius * Math.sin(this.elevation),
      this.center.z + this.radius * ce * Math.cos(this.azimuth),
    );
    this.camera.lookAt(this.center);
    this.renderer.render(this.scene, this.camera);
  }
}
